#include <map>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"

#include "engage/error.hpp"
#include "engage/sessionizer.hpp"

using namespace engage;
using fixtures::at;

namespace {

std::vector<ClassifiedRecord> stream_of(const std::vector<std::int64_t>& minutes) {
  std::vector<ClassifiedRecord> out;
  for (auto m : minutes) out.push_back(at(m));
  return out;
}

}  // namespace

TEST_CASE("threshold examples") {
  std::vector<std::int64_t> gaps;
  for (int i = 1; i <= 100; ++i) gaps.push_back(i);
  CHECK(threshold_from_gaps(gaps) == 95);
  CHECK(threshold_from_gaps(std::vector<std::int64_t>(50, 10)) == 10);
}

TEST_CASE("threshold ignores zero gaps and gaps over the cap") {
  std::vector<std::int64_t> gaps(30, 0);
  for (int i = 0; i < 20; ++i) gaps.push_back(20);
  for (int i = 0; i < 20; ++i) gaps.push_back(500);
  CHECK(threshold_from_gaps(gaps) == 20);
  std::vector<std::int64_t> at_cap{120, 120, 121};
  CHECK(threshold_from_gaps(at_cap) == 120);
}

TEST_CASE("threshold rounding ties go up") {
  ThresholdOptions o;
  o.rounding_minutes = 10;
  CHECK(threshold_from_gaps(std::vector<std::int64_t>{15}, o) == 20);
  CHECK(threshold_from_gaps(std::vector<std::int64_t>{14}, o) == 10);
  CHECK(threshold_from_gaps(std::vector<std::int64_t>{12}) == 10);
  CHECK(threshold_from_gaps(std::vector<std::int64_t>{13}) == 15);
}

TEST_CASE("threshold needs a qualifying gap") {
  try {
    threshold_from_gaps(std::vector<std::int64_t>{0, 0, 200});
    FAIL("expected NoGaps");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::no_gaps);
  }
}

TEST_CASE("threshold matches a sort-based oracle") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    std::uniform_int_distribution<int> len(1, 400), g(0, 200);
    std::vector<std::int64_t> gaps(static_cast<std::size_t>(len(rng)));
    for (auto& x : gaps) x = g(rng);
    if (std::none_of(gaps.begin(), gaps.end(), [](auto x) { return x > 0 && x <= 120; })) continue;
    CHECK(threshold_from_gaps(gaps) == fixtures::sorted_threshold(gaps, 120, 5, 0.95));
  }
}

TEST_CASE("gaps are taken within students only") {
  std::vector<StudentStream> s(2);
  s[0].records = stream_of({0, 5, 12});
  s[1].records = stream_of({1000, 1003});
  auto gaps = consecutive_gaps(s);
  std::sort(gaps.begin(), gaps.end());
  CHECK(gaps == std::vector<std::int64_t>{3, 5, 7});
}

TEST_CASE("segment examples") {
  auto recs = stream_of({0, 10, 60, 130});
  auto s = segment(recs, 45);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == RawSession{0, 2});
  CHECK(s[1] == RawSession{2, 3});
  CHECK(s[2] == RawSession{3, 4});

  auto one = stream_of({7});
  CHECK(segment(one, 45) == std::vector<RawSession>{{0, 1}});

  auto edge = stream_of({0, 45, 45});
  CHECK(segment(edge, 45).size() == 1);
  CHECK(segment(std::vector<ClassifiedRecord>{}, 45).empty());
}

TEST_CASE("segment rejects unsorted input") {
  auto recs = stream_of({10, 5});
  try {
    segment(recs, 45);
    FAIL("expected UnsortedInput");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unsorted_input);
  }
}

TEST_CASE("segment agrees with the pairwise oracle and covers every record once") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 100; ++t) {
    const auto minutes = fixtures::random_minutes(rng, 1 + rng() % 300, 45);
    const auto recs = stream_of(minutes);
    const auto sessions = segment(recs, 45);
    const auto label = fixtures::naive_session_labels(minutes, 45);
    std::size_t covered = 0;
    for (std::size_t s = 0; s < sessions.size(); ++s) {
      CHECK(sessions[s].begin == covered);
      for (std::size_t i = sessions[s].begin; i < sessions[s].end; ++i) CHECK(label[i] == static_cast<int>(s));
      covered = sessions[s].end;
    }
    CHECK(covered == recs.size());
  }
}

TEST_CASE("a larger threshold never yields more sessions") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto recs = stream_of(fixtures::random_minutes(rng, 200, 30));
    std::size_t prev = recs.size() + 1;
    for (int thr : {0, 5, 15, 30, 45, 90, 120, 1000}) {
      const auto n = segment(recs, thr).size();
      CHECK(n <= prev);
      prev = n;
    }
  }
}

TEST_CASE("split_by_chapter") {
  std::vector<ClassifiedRecord> recs{at(1440 * 3 + 0, std::nullopt, "home"), at(1440 * 3 + 5, 2, "ch2 notes"),
                                     at(1440 * 3 + 9, 3, "ch3 video"), at(1440 * 3 + 20, 2, "ch2 quiz"),
                                     at(1440 * 3 + 25, std::nullopt, "ch3 video")};
  ActivityUniverse u(5);
  u.add(2, recs[1].activity_key);
  u.add(2, recs[3].activity_key);
  u.add(3, recs[2].activity_key);
  u.finalize();

  auto ss = split_by_chapter(recs, {0, recs.size()}, u);
  REQUIRE(ss.size() == 2);
  CHECK(ss[0].chapter == 2);
  CHECK(ss[1].chapter == 3);
  for (const auto& s : ss) CHECK(s.start_day == 3);
  // chapterless records count for timing in both
  CHECK(ss[0].start_time == recs[0].base.timestamp);
  CHECK(ss[0].end_time == recs[4].base.timestamp);
  CHECK(ss[1].start_time == recs[0].base.timestamp);
  CHECK(ss[0].activity == std::vector<std::uint8_t>{1, 1});
  // the trailing chapterless record shares a key with chapter 3's universe
  CHECK(ss[1].activity == std::vector<std::uint8_t>{1});

  std::vector<ClassifiedRecord> only_other{at(0), at(3)};
  CHECK(split_by_chapter(only_other, {0, 2}, u).empty());

  std::vector<ClassifiedRecord> ch2{at(0, 2, "a"), at(20, 2, "a")};
  auto one = split_by_chapter(ch2, {0, 2}, u);
  REQUIRE(one.size() == 1);
  CHECK(one[0].start_time == ch2[0].base.timestamp);
  CHECK(one[0].end_time == ch2[1].base.timestamp);
}

TEST_CASE("aggregate") {
  StudySession a{"u", 0, 1, 1, 12, {}, {}, {1, 0, 0}};
  StudySession b{"u", 0, 1, 2, 7, {}, {}, {0, 1, 0}};
  StudySession c{"u", 0, 1, 3, 30, {}, {}, {0, 1, 0}};
  std::vector<StudySession> ss{a, b, c};
  auto agg = aggregate("u", 1, ss, 3);
  CHECK(agg.activity == std::vector<std::uint8_t>{1, 1, 0});
  CHECK(agg.session_count == 3);
  CHECK(agg.earliest_day == 7);
  CHECK(agg.diversity() == 2);

  std::vector<StudySession> rev{c, a, b, a};
  auto agg2 = aggregate("u", 1, rev, 3);
  CHECK(agg2.activity == agg.activity);
  CHECK(agg2.earliest_day == agg.earliest_day);

  auto none = aggregate("u", 1, {}, 3);
  CHECK(none.session_count == 0);
  CHECK_FALSE(none.earliest_day);
  CHECK(none.diversity() == 0);

  StudySession other{"v", 0, 1, 1, 0, {}, {}, {0, 0, 1}};
  std::vector<StudySession> mixed{a, other};
  try {
    aggregate("u", 1, mixed, 3);
    FAIL("expected MixedKeys");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::mixed_keys);
  }
}

TEST_CASE("sessionize numbers chapter sessions and matches the serial reference") {
  std::mt19937_64 rng(9);
  std::vector<ClassifiedRecord> all;
  std::uniform_int_distribution<int> ch(0, 6);
  for (int u = 0; u < 40; ++u) {
    for (auto m : fixtures::random_minutes(rng, 150, 30)) {
      const int k = ch(rng);
      all.push_back(at(m, k == 0 ? std::nullopt : std::optional<int>(k), "ctx" + std::to_string(k), "u" + std::to_string(u)));
    }
  }
  const auto streams = group_by_student(all);
  CHECK(streams.size() == 40);
  const auto universe = ActivityUniverse::from_streams(streams, 6);
  const auto par = sessionize(streams, 30, universe);
  const auto ser = sessionize_serial(streams, 30, universe);
  REQUIRE(par.size() == ser.size());
  for (std::size_t i = 0; i < par.size(); ++i) {
    CHECK(par[i].user_id == ser[i].user_id);
    CHECK(par[i].chapter == ser[i].chapter);
    CHECK(par[i].index == ser[i].index);
    CHECK(par[i].start_time == ser[i].start_time);
    CHECK(par[i].activity == ser[i].activity);
  }

  // per (user, chapter), l runs 1..L in start order
  std::map<std::pair<std::string, int>, std::vector<const StudySession*>> by;
  for (const auto& s : par) by[{s.user_id, s.chapter}].push_back(&s);
  for (const auto& [key, v] : by)
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK(v[i]->index == static_cast<int>(i) + 1);
      if (i > 0) CHECK(v[i - 1]->start_time <= v[i]->start_time);
    }

  // sum of L_k is at least the number of raw sessions with a chapter record
  std::size_t chaptered = 0;
  for (const auto& s : streams)
    for (const auto& raw : segment(s.records, 30))
      for (std::size_t i = raw.begin; i < raw.end; ++i)
        if (s.records[i].chapter) {
          ++chaptered;
          break;
        }
  CHECK(par.size() >= chaptered);
}

TEST_CASE("group_by_student orders by cohort and user, stable in time") {
  std::vector<ClassifiedRecord> recs{at(5, std::nullopt, "b", "u2"), at(1, std::nullopt, "a", "u1"),
                                     at(5, std::nullopt, "c", "u2"), at(0, std::nullopt, "d", "u2")};
  recs[1].cohort = 1;
  auto s = group_by_student(recs);
  REQUIRE(s.size() == 2);
  CHECK(s[0].user_id == "u2");
  CHECK(s[1].cohort == 1);
  REQUIRE(s[0].records.size() == 3);
  CHECK(s[0].records[0].base.event_context == "d");
  CHECK(s[0].records[1].base.event_context == "b");
  CHECK(s[0].records[2].base.event_context == "c");
}
