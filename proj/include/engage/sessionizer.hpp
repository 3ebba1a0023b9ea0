#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "engage/ingest.hpp"

namespace engage {

/// All retained records of one student, sorted by timestamp (stable).
struct StudentStream {
  std::string user_id;
  int cohort = 0;
  std::vector<ClassifiedRecord> records;
};

/// Groups records per (cohort, user); streams are ordered by cohort then
/// user id, records inside a stream stably sorted by timestamp.
std::vector<StudentStream> group_by_student(std::vector<ClassifiedRecord> records);

struct ThresholdOptions {
  int cap_minutes = 120;
  int rounding_minutes = 5;
  double percentile = 0.95;
};

/// Gaps in minutes between consecutive logs of the same student.
std::vector<std::int64_t> consecutive_gaps(std::span<const StudentStream> streams);

/// Nearest-rank percentile of the gaps in (0, cap], rounded to the nearest
/// multiple of `rounding_minutes` (halves round up). Throws Errc::no_gaps.
int threshold_from_gaps(std::span<const std::int64_t> gaps, const ThresholdOptions& opt = {});
int inactivity_threshold(std::span<const StudentStream> streams, const ThresholdOptions& opt = {});

/// Half-open index range [begin, end) into a student's record stream.
struct RawSession {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const RawSession&) const = default;
};

/// Starts a new session at the first record and after every gap strictly
/// greater than `threshold_minutes`. Throws Errc::unsorted_input.
std::vector<RawSession> segment(std::span<const ClassifiedRecord> stream, int threshold_minutes);

/// Per-chapter ordered universe of activity keys (the N_k activities).
class ActivityUniverse {
 public:
  ActivityUniverse() = default;
  explicit ActivityUniverse(int chapter_count);

  /// Collects keys of chapter-bearing records. Keys are kept sorted.
  static ActivityUniverse from_streams(std::span<const StudentStream> streams, int chapter_count);

  void add(int chapter, const std::string& key);
  void finalize();

  int chapter_count() const noexcept { return static_cast<int>(keys_.size()); }
  std::size_t size(int chapter) const { return keys_.at(chapter - 1).size(); }
  const std::vector<std::string>& keys(int chapter) const { return keys_.at(chapter - 1); }
  std::optional<std::size_t> index(int chapter, const std::string& key) const;

 private:
  std::vector<std::vector<std::string>> keys_;
  std::vector<std::unordered_map<std::string, std::size_t>> lookup_;
};

struct StudySession {
  std::string user_id;
  int cohort = 0;
  int chapter = 0;
  int index = 0;  ///< 1-based l within (user, chapter), in start order
  std::int64_t start_day = 0;
  Minutes start_time{};
  Minutes end_time{};
  std::vector<std::uint8_t> activity;  ///< binary, length N_k
};

/// One StudySession per distinct chapter in the raw session. Chapterless
/// records count for timing in every emitted chapter-session and enter the
/// activity vector only when their key belongs to that chapter's universe.
/// A session without chapter-bearing records yields nothing. The session day
/// is that of the raw session's first record.
std::vector<StudySession> split_by_chapter(std::span<const ClassifiedRecord> stream,
                                           const RawSession& session,
                                           const ActivityUniverse& universe);

struct ChapterAggregate {
  std::string user_id;
  int chapter = 0;
  int session_count = 0;
  std::optional<std::int64_t> earliest_day;
  std::vector<std::uint8_t> activity;

  int diversity() const noexcept;
};

/// Element-wise maximum of activity vectors, minimum session day, session
/// count. Throws Errc::mixed_keys when sessions disagree with (user, chapter).
ChapterAggregate aggregate(const std::string& user_id, int chapter,
                           std::span<const StudySession> sessions, std::size_t universe_size);

/// Full per-student sessionization: segment, split by chapter, number the
/// sessions of each chapter. OpenMP-parallel over students; output order is
/// independent of the schedule.
std::vector<StudySession> sessionize(std::span<const StudentStream> streams, int threshold_minutes,
                                     const ActivityUniverse& universe);
/// Single-threaded reference of `sessionize`.
std::vector<StudySession> sessionize_serial(std::span<const StudentStream> streams,
                                            int threshold_minutes,
                                            const ActivityUniverse& universe);

}  // namespace engage
