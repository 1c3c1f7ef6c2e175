#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>
#include <unordered_set>

#include "winstack/corpus.hpp"
#include "winstack/rng.hpp"

using namespace winstack;

namespace {

Recording make_rec(const std::string& rid, const std::string& sid, const std::string& pid,
                   double duration, Label label, double confidence = 1.0) {
  return Recording{rid, sid, pid, duration, label, confidence};
}

// Corpus with the published auto-labelled composition: 26,504 recordings
// (19,109 abnormal / 7,395 normal) across 18,747 sessions.
std::vector<Recording> autotuab_scale_records() {
  std::vector<Recording> records;
  records.reserve(26504);
  const int n_sessions = 18747;
  const int n_recordings = 26504;
  const int n_abnormal = 19109;
  int rec = 0;
  for (int s = 0; s < n_sessions; ++s) {
    // Spread the 7,757 extra recordings over the first sessions.
    const int per_session = s < (n_recordings - n_sessions) ? 2 : 1;
    const Label label = rec < n_abnormal ? Label::Abnormal : Label::Normal;
    for (int k = 0; k < per_session; ++k) {
      records.push_back(make_rec("r" + std::to_string(rec), "s" + std::to_string(s),
                                 "pat" + std::to_string(s), 600.0, label, 0.995));
      ++rec;
    }
  }
  return records;
}

}  // namespace

TEST_CASE("build_corpus reproduces the auto-labelled corpus composition") {
  const auto records = autotuab_scale_records();
  REQUIRE(records.size() == 26504);
  const Corpus corpus = build_corpus(records, InclusionPolicy::autotuab(), "autotuab-scale");
  CHECK(corpus.recording_count() == 26504);
  CHECK(corpus.session_count() == 18747);
  const auto counts = corpus.recording_label_counts();
  CHECK(counts.n_abnormal == 19109);
  CHECK(counts.n_normal == 7395);
}

TEST_CASE("build_corpus on an empty descriptor list") {
  const Corpus corpus = build_corpus({}, InclusionPolicy{}, "empty");
  CHECK(corpus.recording_count() == 0);
  CHECK(corpus.session_count() == 0);
}

TEST_CASE("inclusion policy drops low-confidence records") {
  std::vector<Recording> records = {
      make_rec("r0", "s0", "p0", 600, Label::Normal, 1.0),
      make_rec("r1", "s1", "p1", 600, Label::Abnormal, 0.98),
      make_rec("r2", "s2", "p2", 600, Label::Abnormal, 0.999),
  };
  InclusionPolicy policy{0.0, 0.99};
  const Corpus corpus = build_corpus(records, policy);
  CHECK(corpus.recording_count() == 2);
  CHECK(corpus.find_recording("r1") == nullptr);
}

TEST_CASE("inclusion policy drops short recordings") {
  std::vector<Recording> records = {
      make_rec("r0", "s0", "p0", 359.0, Label::Normal),
      make_rec("r1", "s1", "p1", 360.0, Label::Normal),
  };
  const Corpus corpus = build_corpus(records, InclusionPolicy::autotuab());
  CHECK(corpus.recording_count() == 1);
  CHECK(corpus.find_recording("r1") != nullptr);
}

TEST_CASE("build_corpus rejects duplicate recording ids, naming the id") {
  std::vector<Recording> records = {
      make_rec("dup", "s0", "p0", 600, Label::Normal),
      make_rec("dup", "s0", "p0", 600, Label::Normal),
  };
  CHECK_THROWS_WITH_AS(build_corpus(records, InclusionPolicy{}),
                       doctest::Contains("dup"), std::runtime_error);
}

TEST_CASE("build_corpus rejects sessions with mixed patients") {
  std::vector<Recording> records = {
      make_rec("r0", "s0", "pa", 600, Label::Normal),
      make_rec("r1", "s0", "pb", 600, Label::Normal),
  };
  CHECK_THROWS_AS(build_corpus(records, InclusionPolicy{}), std::runtime_error);
}

TEST_CASE("build_corpus is idempotent on its own output") {
  const Corpus corpus = build_corpus(autotuab_scale_records(), InclusionPolicy::autotuab());
  std::vector<Recording> again;
  for (const auto* r : corpus.recordings()) again.push_back(*r);
  const Corpus rebuilt = build_corpus(again, corpus.policy);
  CHECK(rebuilt.recording_count() == corpus.recording_count());
  CHECK(rebuilt.session_count() == corpus.session_count());
  CHECK(rebuilt.recording_label_counts().n_abnormal ==
        corpus.recording_label_counts().n_abnormal);
}

TEST_CASE("split_by_patient puts one of ten single-recording patients in test") {
  std::vector<Recording> records;
  for (int i = 0; i < 10; ++i) {
    records.push_back(make_rec("r" + std::to_string(i), "s" + std::to_string(i),
                               "p" + std::to_string(i), 600, Label::Normal));
  }
  const Corpus corpus = build_corpus(records, InclusionPolicy{});
  const Split split = split_by_patient(corpus, 0.1, 7);
  CHECK(split.test.size() == 1);
  CHECK(split.train.size() == 9);
  CHECK(patients_disjoint(corpus, split));
}

TEST_CASE("split_by_patient is deterministic in the seed") {
  const Corpus corpus = build_corpus(autotuab_scale_records(), InclusionPolicy{});
  const Split a = split_by_patient(corpus, 0.1, 123);
  const Split b = split_by_patient(corpus, 0.1, 123);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  const Split c = split_by_patient(corpus, 0.1, 124);
  CHECK(a.test != c.test);
}

TEST_CASE("split_by_patient on a 1000-patient corpus: disjoint, near target fraction") {
  std::vector<Recording> records;
  Rng rng(99);
  std::size_t total = 0;
  std::size_t max_per_patient = 0;
  for (int p = 0; p < 1000; ++p) {
    const std::size_t n = 1 + rng.below(3);
    max_per_patient = std::max(max_per_patient, n);
    for (std::size_t k = 0; k < n; ++k) {
      records.push_back(make_rec("p" + std::to_string(p) + "r" + std::to_string(k),
                                 "p" + std::to_string(p) + "s", "p" + std::to_string(p), 600,
                                 Label::Normal));
      ++total;
    }
  }
  const Corpus corpus = build_corpus(records, InclusionPolicy{});
  const Split split = split_by_patient(corpus, 0.1, 5);
  CHECK(patients_disjoint(corpus, split));
  const double fraction = static_cast<double>(split.test.size()) / static_cast<double>(total);
  CHECK(fraction >= 0.1);
  CHECK(fraction <= 0.1 + static_cast<double>(max_per_patient) / static_cast<double>(total));
}

TEST_CASE("split_by_patient rejects a single-patient corpus") {
  std::vector<Recording> records = {
      make_rec("r0", "s0", "p0", 600, Label::Normal),
      make_rec("r1", "s1", "p0", 600, Label::Normal),
  };
  const Corpus corpus = build_corpus(records, InclusionPolicy{});
  CHECK_THROWS_AS(split_by_patient(corpus, 0.1, 1), std::runtime_error);
}

TEST_CASE("class weights follow the inverse-frequency rule") {
  SUBCASE("published corpus counts") {
    std::vector<Label> labels(7395, Label::Normal);
    labels.insert(labels.end(), 19109, Label::Abnormal);
    const ClassWeights w = class_weights(labels);
    CHECK(w.a_abnormal == 1.0);
    CHECK(w.a_normal == doctest::Approx(19109.0 / 7395.0).epsilon(1e-12));
    CHECK(w.a_normal == doctest::Approx(2.5840).epsilon(1e-4));
    // Identity: a_i * n_i = max(n_normal, n_abnormal) for both classes.
    CHECK(w.a_normal * w.n_normal == doctest::Approx(19109.0).epsilon(1e-15));
    CHECK(w.a_abnormal * w.n_abnormal == 19109.0);
  }
  SUBCASE("balanced classes get unit weights") {
    std::vector<Label> labels(100, Label::Normal);
    labels.insert(labels.end(), 100, Label::Abnormal);
    const ClassWeights w = class_weights(labels);
    CHECK(w.a_normal == 1.0);
    CHECK(w.a_abnormal == 1.0);
  }
  SUBCASE("1 normal vs 3 abnormal") {
    const ClassWeights w = class_weights({Label::Normal, Label::Abnormal, Label::Abnormal,
                                          Label::Abnormal});
    CHECK(w.a_normal == 3.0);
    CHECK(w.a_abnormal == 1.0);
  }
  SUBCASE("a missing class is an error naming the class") {
    CHECK_THROWS_WITH_AS(class_weights({Label::Abnormal, Label::Abnormal}),
                         doctest::Contains("normal"), std::runtime_error);
  }
}

TEST_CASE("manifest round trip") {
  std::vector<Recording> records = {
      make_rec("r0", "s0", "p0", 1260.5, Label::Abnormal, 0.991),
      make_rec("r1", "s0", "p0", 600, Label::Abnormal, 1.0),
      make_rec("r2", "s1", "p1", 725.25, Label::Normal, 0.5),
  };
  const Corpus corpus = build_corpus(records, InclusionPolicy{}, "roundtrip");
  const auto path = std::filesystem::temp_directory_path() / "winstack_test_manifest.csv";
  write_manifest(path, corpus);
  const auto back = read_manifest(path);
  REQUIRE(back.size() == 3);
  CHECK(back[0].recording_id == "r0");
  CHECK(back[0].duration_s == 1260.5);
  CHECK(back[0].label == Label::Abnormal);
  CHECK(back[0].label_confidence == 0.991);
  CHECK(back[2].patient_id == "p1");
  std::filesystem::remove(path);
}
