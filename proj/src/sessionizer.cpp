#include "engage/sessionizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "engage/error.hpp"

namespace engage {

std::vector<StudentStream> group_by_student(std::vector<ClassifiedRecord> records) {
  std::map<std::pair<int, std::string>, std::vector<ClassifiedRecord>> groups;
  for (auto& r : records) {
    auto key = std::make_pair(r.cohort, r.base.user_id);
    groups[key].push_back(std::move(r));
  }
  std::vector<StudentStream> out;
  out.reserve(groups.size());
  for (auto& [key, recs] : groups) {
    std::stable_sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) {
      return a.base.timestamp < b.base.timestamp;
    });
    out.push_back({key.second, key.first, std::move(recs)});
  }
  return out;
}

std::vector<std::int64_t> consecutive_gaps(std::span<const StudentStream> streams) {
  std::vector<std::int64_t> gaps;
  for (const auto& s : streams)
    for (std::size_t i = 1; i < s.records.size(); ++i)
      gaps.push_back((s.records[i].base.timestamp - s.records[i - 1].base.timestamp).count());
  return gaps;
}

int threshold_from_gaps(std::span<const std::int64_t> gaps, const ThresholdOptions& opt) {
  std::vector<std::int64_t> kept;
  kept.reserve(gaps.size());
  for (auto g : gaps)
    if (g > 0 && g <= opt.cap_minutes) kept.push_back(g);
  if (kept.empty()) throw Error(Errc::no_gaps, "no inter-log gaps within the cap");

  auto rank = static_cast<std::size_t>(std::ceil(opt.percentile * static_cast<double>(kept.size())));
  rank = std::clamp<std::size_t>(rank, 1, kept.size());
  auto nth = kept.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(kept.begin(), nth, kept.end());
  const std::int64_t pct = *nth;

  const std::int64_t step = opt.rounding_minutes;
  if (step <= 1) return static_cast<int>(pct);
  return static_cast<int>(((2 * pct + step) / (2 * step)) * step);
}

int inactivity_threshold(std::span<const StudentStream> streams, const ThresholdOptions& opt) {
  auto gaps = consecutive_gaps(streams);
  return threshold_from_gaps(gaps, opt);
}

std::vector<RawSession> segment(std::span<const ClassifiedRecord> stream, int threshold_minutes) {
  std::vector<RawSession> out;
  if (stream.empty()) return out;
  RawSession cur{0, 1};
  for (std::size_t i = 1; i < stream.size(); ++i) {
    auto gap = (stream[i].base.timestamp - stream[i - 1].base.timestamp).count();
    if (gap < 0)
      throw Error(Errc::unsorted_input,
                  "record " + std::to_string(i) + " precedes its predecessor");
    if (gap > threshold_minutes) {
      out.push_back(cur);
      cur = {i, i + 1};
    } else {
      cur.end = i + 1;
    }
  }
  out.push_back(cur);
  return out;
}

ActivityUniverse::ActivityUniverse(int chapter_count)
    : keys_(static_cast<std::size_t>(chapter_count)),
      lookup_(static_cast<std::size_t>(chapter_count)) {}

ActivityUniverse ActivityUniverse::from_streams(std::span<const StudentStream> streams,
                                                int chapter_count) {
  ActivityUniverse u(chapter_count);
  for (const auto& s : streams)
    for (const auto& r : s.records)
      if (r.chapter) u.add(*r.chapter, r.activity_key);
  u.finalize();
  return u;
}

void ActivityUniverse::add(int chapter, const std::string& key) {
  auto& map = lookup_.at(chapter - 1);
  if (map.emplace(key, 0).second) keys_[chapter - 1].push_back(key);
}

void ActivityUniverse::finalize() {
  for (std::size_t k = 0; k < keys_.size(); ++k) {
    std::sort(keys_[k].begin(), keys_[k].end());
    lookup_[k].clear();
    for (std::size_t j = 0; j < keys_[k].size(); ++j) lookup_[k].emplace(keys_[k][j], j);
  }
}

std::optional<std::size_t> ActivityUniverse::index(int chapter, const std::string& key) const {
  if (chapter < 1 || chapter > chapter_count()) return std::nullopt;
  const auto& map = lookup_[chapter - 1];
  auto it = map.find(key);
  if (it == map.end()) return std::nullopt;
  return it->second;
}

std::vector<StudySession> split_by_chapter(std::span<const ClassifiedRecord> stream,
                                           const RawSession& session,
                                           const ActivityUniverse& universe) {
  auto recs = stream.subspan(session.begin, session.end - session.begin);
  std::vector<int> chapters;
  for (const auto& r : recs)
    if (r.chapter) chapters.push_back(*r.chapter);
  std::sort(chapters.begin(), chapters.end());
  chapters.erase(std::unique(chapters.begin(), chapters.end()), chapters.end());

  std::vector<StudySession> out;
  out.reserve(chapters.size());
  for (int k : chapters) {
    StudySession s;
    s.user_id = recs.front().base.user_id;
    s.cohort = recs.front().cohort;
    s.chapter = k;
    s.start_day = recs.front().day_index;
    s.activity.assign(universe.size(k), 0);
    bool first = true;
    for (const auto& r : recs) {
      if (r.chapter && *r.chapter != k) continue;
      if (first) {
        s.start_time = r.base.timestamp;
        first = false;
      }
      s.end_time = r.base.timestamp;
      if (auto j = universe.index(k, r.activity_key)) s.activity[*j] = 1;
    }
    out.push_back(std::move(s));
  }
  return out;
}

int ChapterAggregate::diversity() const noexcept {
  int d = 0;
  for (auto a : activity) d += a != 0;
  return d;
}

ChapterAggregate aggregate(const std::string& user_id, int chapter,
                           std::span<const StudySession> sessions, std::size_t universe_size) {
  ChapterAggregate agg{user_id, chapter, 0, std::nullopt,
                       std::vector<std::uint8_t>(universe_size, 0)};
  for (const auto& s : sessions) {
    if (s.user_id != user_id || s.chapter != chapter)
      throw Error(Errc::mixed_keys, "session of (" + s.user_id + ", chapter " +
                                        std::to_string(s.chapter) + ") in aggregate for (" +
                                        user_id + ", chapter " + std::to_string(chapter) + ")");
    if (s.activity.size() != universe_size)
      throw Error(Errc::mixed_keys, "activity vector length differs from the chapter universe");
    ++agg.session_count;
    agg.earliest_day = agg.earliest_day ? std::min(*agg.earliest_day, s.start_day) : s.start_day;
    for (std::size_t j = 0; j < universe_size; ++j) agg.activity[j] |= s.activity[j];
  }
  return agg;
}

namespace {

std::vector<StudySession> sessionize_one(const StudentStream& stream, int threshold_minutes,
                                         const ActivityUniverse& universe) {
  std::vector<StudySession> out;
  std::vector<int> counter(static_cast<std::size_t>(universe.chapter_count()) + 1, 0);
  for (const auto& raw : segment(stream.records, threshold_minutes)) {
    for (auto& s : split_by_chapter(stream.records, raw, universe)) {
      s.index = ++counter[static_cast<std::size_t>(s.chapter)];
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<StudySession> flatten(std::vector<std::vector<StudySession>>& per_student) {
  std::size_t total = 0;
  for (const auto& v : per_student) total += v.size();
  std::vector<StudySession> out;
  out.reserve(total);
  for (auto& v : per_student)
    for (auto& s : v) out.push_back(std::move(s));
  return out;
}

}  // namespace

std::vector<StudySession> sessionize(std::span<const StudentStream> streams, int threshold_minutes,
                                     const ActivityUniverse& universe) {
  std::vector<std::vector<StudySession>> per_student(streams.size());
  const auto n = static_cast<std::int64_t>(streams.size());
  // Exceptions must not escape an OpenMP region; capture the first one.
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      per_student[i] = sessionize_one(streams[i], threshold_minutes, universe);
    } catch (...) {
#pragma omp critical(engage_sessionize_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return flatten(per_student);
}

std::vector<StudySession> sessionize_serial(std::span<const StudentStream> streams,
                                            int threshold_minutes,
                                            const ActivityUniverse& universe) {
  std::vector<std::vector<StudySession>> per_student;
  per_student.reserve(streams.size());
  for (const auto& s : streams) per_student.push_back(sessionize_one(s, threshold_minutes, universe));
  return flatten(per_student);
}

}  // namespace engage
