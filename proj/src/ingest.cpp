#include "engage/ingest.hpp"

#include <array>
#include <sstream>

#include "engage/csv.hpp"
#include "engage/error.hpp"

namespace engage {

std::string_view to_string(DeliveryMethod m) noexcept {
  switch (m) {
    case DeliveryMethod::online: return "online";
    case DeliveryMethod::hybrid: return "hybrid";
    case DeliveryMethod::in_person: return "in_person";
  }
  return "online";
}

std::optional<DeliveryMethod> delivery_from_string(std::string_view s) noexcept {
  if (s == "online" || s == "1") return DeliveryMethod::online;
  if (s == "hybrid" || s == "2") return DeliveryMethod::hybrid;
  if (s == "in_person" || s == "3") return DeliveryMethod::in_person;
  return std::nullopt;
}

void CohortConfig::validate() const {
  if (week_lo > week_hi)
    throw Error(Errc::config_error, "cohort '" + label + "': week_lo > week_hi");
  if (video_count < 1) throw Error(Errc::config_error, "cohort '" + label + "': video_count < 1");
}

int CohortConfig::week_of(std::int64_t day) const noexcept {
  std::int64_t q = day >= 0 ? day / 7 : -((-day + 6) / 7);
  return week_lo + static_cast<int>(q);
}

std::vector<LogRecord> parse_log(std::istream& in, const LogSchema& schema) {
  csv::Table t = csv::read(in, schema.delimiter);
  if (t.header.empty()) throw Error(Errc::empty_file, "log file has no header");

  std::array<const std::string*, 6> names{&schema.time,      &schema.user,
                                          &schema.event_context, &schema.component,
                                          &schema.event_name, &schema.description};
  std::array<std::size_t, 6> col{};
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto c = t.column(*names[i]);
    if (!c) throw Error(Errc::missing_column, "missing column '" + *names[i] + "'");
    col[i] = *c;
  }
  if (t.rows.empty()) throw Error(Errc::empty_file, "log file has no data rows");

  std::vector<LogRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto& row = t.rows[r];
    auto field = [&](std::size_t i) -> std::string& {
      if (col[i] >= row.size())
        throw Error(Errc::missing_column,
                    "row " + std::to_string(r + 1) + " lacks column '" + *names[i] + "'");
      return row[col[i]];
    };
    auto ts = parse_timestamp(field(0));
    if (!ts) throw BadTimestamp(r + 1, field(0));
    LogRecord rec{*ts,
                  std::move(field(1)),
                  std::move(field(2)),
                  std::move(field(3)),
                  std::move(field(4)),
                  std::move(field(5))};
    if (rec.user_id.empty())
      throw Error(Errc::io_error, "empty user id at row " + std::to_string(r + 1));
    out.push_back(std::move(rec));
  }
  return out;
}

void write_log(std::ostream& out, std::span<const LogRecord> records, const LogSchema& schema) {
  std::array<std::string, 6> header{schema.time,      schema.user,       schema.event_context,
                                    schema.component, schema.event_name, schema.description};
  csv::write_row(out, header, schema.delimiter);
  std::array<std::string, 6> row;
  for (const auto& r : records) {
    row = {format_timestamp(r.timestamp), r.user_id,    r.event_context,
           r.component,                   r.event_name, r.description};
    csv::write_row(out, row, schema.delimiter);
  }
}

std::unordered_set<std::string> read_user_list(std::istream& in) {
  std::unordered_set<std::string> users;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    std::size_t start = line.find_first_not_of(' ');
    if (start == std::string::npos) continue;
    users.insert(line.substr(start));
  }
  return users;
}

std::vector<LogRecord> filter_cohort(std::span<const LogRecord> records, const CohortConfig& cohort,
                                     const std::unordered_set<std::string>& eligible_users) {
  std::vector<LogRecord> out;
  for (const auto& r : records) {
    if (!eligible_users.contains(r.user_id)) continue;
    int week = cohort.week_of(cohort.day_index(r.timestamp));
    if (week < cohort.week_lo || week > cohort.week_hi) continue;
    out.push_back(r);
  }
  return out;
}

std::string_view to_string(ResourceKind k) noexcept {
  switch (k) {
    case ResourceKind::lecture_note: return "lecture_note";
    case ResourceKind::video: return "video";
    case ResourceKind::quiz: return "quiz";
    case ResourceKind::forum: return "forum";
    case ResourceKind::url: return "url";
    case ResourceKind::zoom: return "zoom";
    case ResourceKind::other: return "other";
  }
  return "other";
}

std::optional<ResourceKind> resource_kind_from_string(std::string_view s) noexcept {
  for (auto k : {ResourceKind::lecture_note, ResourceKind::video, ResourceKind::quiz,
                 ResourceKind::forum, ResourceKind::url, ResourceKind::zoom, ResourceKind::other})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::optional<LogField> log_field_from_string(std::string_view s) noexcept {
  if (s == "event_context" || s == "Event.context") return LogField::event_context;
  if (s == "component" || s == "Component") return LogField::component;
  if (s == "event_name" || s == "Event.name") return LogField::event_name;
  if (s == "description" || s == "Description") return LogField::description;
  return std::nullopt;
}

RuleSet::RuleSet(std::vector<ClassifierRule> rules, int chapter_count)
    : rules_(std::move(rules)), chapter_count_(chapter_count) {
  compiled_.reserve(rules_.size());
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const auto& rule = rules_[i];
    try {
      compiled_.emplace_back(rule.pattern, std::regex::ECMAScript | std::regex::optimize);
    } catch (const std::regex_error& e) {
      throw Error(Errc::invalid_pattern,
                  "rule " + std::to_string(i) + ": pattern '" + rule.pattern + "': " + e.what());
    }
    if (rule.chapter_group < 0 ||
        static_cast<unsigned>(rule.chapter_group) > compiled_.back().mark_count())
      throw Error(Errc::invalid_pattern, "rule " + std::to_string(i) + ": pattern '" +
                                             rule.pattern + "' has no capture group " +
                                             std::to_string(rule.chapter_group));
  }
}

namespace {

const std::string& field_of(const LogRecord& r, LogField f) {
  switch (f) {
    case LogField::event_context: return r.event_context;
    case LogField::component: return r.component;
    case LogField::event_name: return r.event_name;
    case LogField::description: return r.description;
  }
  return r.event_context;
}

}  // namespace

RuleSet::Match RuleSet::match(const LogRecord& r) const {
  std::smatch m;
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const auto& text = field_of(r, rules_[i].field);
    if (!std::regex_search(text, m, compiled_[i])) continue;
    Match out{rules_[i].kind, std::nullopt};
    if (rules_[i].chapter_group > 0 && m[rules_[i].chapter_group].matched) {
      try {
        int ch = std::stoi(m[rules_[i].chapter_group].str());
        if (ch >= 1 && ch <= chapter_count_) out.chapter = ch;
      } catch (const std::exception&) {
      }
    }
    return out;
  }
  return {};
}

std::string activity_key(const LogRecord& r) {
  std::string key;
  key.reserve(r.event_context.size() + r.component.size() + r.event_name.size() + 6);
  key += r.event_context;
  key += " | ";
  key += r.component;
  key += " | ";
  key += r.event_name;
  return key;
}

ClassifiedRecord classify(const LogRecord& record, const RuleSet& rules, const CohortConfig& cohort,
                          int cohort_index) {
  ClassifiedRecord out;
  out.base = record;
  out.cohort = cohort_index;
  out.day_index = cohort.day_index(record.timestamp);
  out.week = cohort.week_of(out.day_index);
  auto m = rules.match(record);
  out.kind = m.kind;
  out.chapter = m.chapter;
  out.activity_key = activity_key(record);
  return out;
}

std::vector<ClassifiedRecord> classify_all(std::span<const LogRecord> records, const RuleSet& rules,
                                           const CohortConfig& cohort, int cohort_index) {
  std::vector<ClassifiedRecord> out(records.size());
  const auto n = static_cast<std::int64_t>(records.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = classify(records[i], rules, cohort, cohort_index);
  return out;
}

}  // namespace engage
