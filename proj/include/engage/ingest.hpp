#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "engage/timeutil.hpp"

namespace engage {

/// Codes follow the predictor encoding G: 1 online, 2 hybrid, 3 in person.
enum class DeliveryMethod : int { online = 1, hybrid = 2, in_person = 3 };

std::string_view to_string(DeliveryMethod m) noexcept;
std::optional<DeliveryMethod> delivery_from_string(std::string_view s) noexcept;

struct CohortConfig {
  std::string label;
  DeliveryMethod delivery = DeliveryMethod::online;
  Days term_start{};
  int week_lo = 5;
  int week_hi = 35;
  int video_count = 1;

  /// Throws Errc::config_error on an empty week range or video_count < 1.
  void validate() const;

  /// Weeks are consecutive 7-day blocks; day 0 of the term opens week_lo.
  int week_of(std::int64_t day_index) const noexcept;
  std::int64_t day_index(Minutes t) const noexcept { return day_offset(term_start, t); }
  /// Last day index that still lies in week_hi.
  int module_end_day() const noexcept { return (week_hi - week_lo + 1) * 7 - 1; }
};

/// One activity-log row.
struct LogRecord {
  Minutes timestamp{};
  std::string user_id;
  std::string event_context;
  std::string component;
  std::string event_name;
  std::string description;

  bool operator==(const LogRecord&) const = default;
};

/// Column names of the log export. Defaults are the Moodle names.
struct LogSchema {
  std::string time = "Time";
  std::string user = "User";
  std::string event_context = "Event.context";
  std::string component = "Component";
  std::string event_name = "Event.name";
  std::string description = "Description";
  char delimiter = ',';
};

/// Parses a delimited log export. Errors: MissingColumn (names the column),
/// BadTimestamp (1-based data row), EmptyFile (no header or no data rows).
std::vector<LogRecord> parse_log(std::istream& in, const LogSchema& schema = {});
void write_log(std::ostream& out, std::span<const LogRecord> records, const LogSchema& schema = {});

/// One user id per line; blank lines ignored.
std::unordered_set<std::string> read_user_list(std::istream& in);

/// Keeps records of eligible users whose timestamp falls in the cohort's
/// week range. Order is preserved.
std::vector<LogRecord> filter_cohort(std::span<const LogRecord> records, const CohortConfig& cohort,
                                     const std::unordered_set<std::string>& eligible_users);

enum class ResourceKind { lecture_note, video, quiz, forum, url, zoom, other };

std::string_view to_string(ResourceKind k) noexcept;
std::optional<ResourceKind> resource_kind_from_string(std::string_view s) noexcept;

enum class LogField { event_context, component, event_name, description };

std::optional<LogField> log_field_from_string(std::string_view s) noexcept;

struct ClassifierRule {
  LogField field = LogField::event_context;
  std::string pattern;
  ResourceKind kind = ResourceKind::other;
  /// Capture group holding the chapter number; 0 means the rule carries no chapter.
  int chapter_group = 0;
};

/// Ordered first-match-wins classifier. Patterns are ECMAScript regexes
/// searched anywhere in the chosen field.
class RuleSet {
 public:
  struct Match {
    ResourceKind kind = ResourceKind::other;
    std::optional<int> chapter;
  };

  RuleSet() = default;
  /// Throws Errc::invalid_pattern when a pattern does not compile or names a
  /// capture group it does not have.
  RuleSet(std::vector<ClassifierRule> rules, int chapter_count);

  Match match(const LogRecord& r) const;
  const std::vector<ClassifierRule>& rules() const noexcept { return rules_; }
  int chapter_count() const noexcept { return chapter_count_; }

 private:
  std::vector<ClassifierRule> rules_;
  std::vector<std::regex> compiled_;
  int chapter_count_ = 0;
};

struct ClassifiedRecord {
  LogRecord base;
  int cohort = 0;  ///< index into the pipeline's cohort list
  int week = 0;
  std::int64_t day_index = 0;
  ResourceKind kind = ResourceKind::other;
  std::optional<int> chapter;
  std::string activity_key;
};

std::string activity_key(const LogRecord& r);

ClassifiedRecord classify(const LogRecord& record, const RuleSet& rules, const CohortConfig& cohort,
                          int cohort_index = 0);

/// Element-wise classify; OpenMP-parallel over records.
std::vector<ClassifiedRecord> classify_all(std::span<const LogRecord> records, const RuleSet& rules,
                                           const CohortConfig& cohort, int cohort_index = 0);

}  // namespace engage
