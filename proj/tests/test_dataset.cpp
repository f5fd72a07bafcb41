#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "intentrec/dataset.hpp"

using namespace intentrec;
namespace fs = std::filesystem;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = (fs::temp_directory_path() / name).string();
  std::ofstream out(path, std::ios::trunc);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("load_sessions: valid rows, header-only file, parse errors") {
  const auto ok = write_temp("ir_sessions_ok.csv",
                             "session_id,timestamp,item_id\n"
                             "s1,10,a\n"
                             "s1,11,b\n"
                             "s2,12,a\n");
  const auto events = load_sessions(ok);
  REQUIRE(events.size() == 3);
  CHECK(events[0].session_id == "s1");
  CHECK(events[0].timestamp == 10);
  CHECK(events[2].item_id == "a");

  const auto empty = write_temp("ir_sessions_empty.csv", "session_id,timestamp,item_id\n");
  CHECK(load_sessions(empty).empty());

  const auto bad_ts = write_temp("ir_sessions_badts.csv",
                                 "session_id,timestamp,item_id\ns1,notanint,a\n");
  CHECK_THROWS_WITH_AS(load_sessions(bad_ts), doctest::Contains("line 2"), std::runtime_error);

  const auto dup = write_temp("ir_sessions_dup.csv",
                              "session_id,timestamp,item_id\n"
                              "s1,1,a\n"
                              "session_id,timestamp,item_id\n");
  CHECK_THROWS_WITH_AS(load_sessions(dup), doctest::Contains("duplicate header"),
                       std::runtime_error);

  CHECK_THROWS_AS(load_sessions("/nonexistent/sessions.csv"), std::runtime_error);

  const auto neg = write_temp("ir_sessions_neg.csv", "session_id,timestamp,item_id\ns1,-4,a\n");
  CHECK_THROWS_AS(load_sessions(neg), std::runtime_error);
}

TEST_CASE("load_attributes: first occurrence wins") {
  const auto path = write_temp("ir_attrs.csv",
                               "item_id,attribute_id\n"
                               "i1,a1\n"
                               "i2,a1\n"
                               "i3,a2\n");
  const auto map = load_attributes(path);
  CHECK(map.size() == 3);
  std::set<std::string> attrs;
  for (const auto& [k, v] : map) attrs.insert(v);
  CHECK(attrs.size() == 2);

  const auto dup = write_temp("ir_attrs_dup.csv", "item_id,attribute_id\ni1,a1\ni1,a2\n");
  CHECK(load_attributes(dup).at("i1") == "a1");

  const auto empty = write_temp("ir_attrs_empty.csv", "item_id,attribute_id\n");
  CHECK(load_attributes(empty).empty());
}

TEST_CASE("augment_split emits nested prefixes") {
  CHECK_THROWS_AS(augment_split({1}, "s", Split::train), std::invalid_argument);

  const auto two = augment_split({10, 11}, "s", Split::train);
  REQUIRE(two.size() == 1);
  CHECK(two[0].items == std::vector<int>{10});
  CHECK(two[0].label == 11);

  const auto three = augment_split({1, 2, 3}, "s", Split::train);
  REQUIRE(three.size() == 2);
  CHECK(three[0].items == std::vector<int>{1});
  CHECK(three[0].label == 2);
  CHECK(three[1].items == std::vector<int>{1, 2});
  CHECK(three[1].label == 3);

  const auto four = augment_split({1, 2, 3, 4}, "s", Split::test);
  REQUIRE(four.size() == 3);
  CHECK(four[2].items == std::vector<int>{1, 2, 3});
  CHECK(four[2].label == 4);

  // strictly nested prefixes, n-1 instances
  for (int n = 2; n <= 7; ++n) {
    std::vector<int> items(n);
    for (int i = 0; i < n; ++i) items[i] = i * 3;
    const auto instances = augment_split(items, "s", Split::train);
    CHECK(instances.size() == static_cast<std::size_t>(n - 1));
    for (std::size_t i = 1; i < instances.size(); ++i) {
      CHECK(instances[i].items.size() == instances[i - 1].items.size() + 1);
      CHECK(std::equal(instances[i - 1].items.begin(), instances[i - 1].items.end(),
                       instances[i].items.begin()));
    }
  }

  const auto from_two = augment_split({1, 2, 3}, "s", Split::train, 2);
  REQUIRE(from_two.size() == 1);
  CHECK(from_two[0].items == std::vector<int>{1, 2});
}

TEST_CASE("split_head_tail: boundary, ties, exhaustive size check") {
  CHECK(split_head_tail({10, 5, 3, 2, 1}, 0.2) == std::vector<bool>{true, false, false, false, false});
  CHECK(split_head_tail({7, 7}, 0.5) == std::vector<bool>{true, false});
  CHECK(split_head_tail({1, 1, 1, 1, 1}, 0.2) ==
        std::vector<bool>{true, false, false, false, false});

  for (int m = 1; m <= 12; ++m) {
    for (double pareto : {0.1, 0.2, 0.5}) {
      std::vector<long long> freq(m);
      for (int i = 0; i < m; ++i) freq[i] = (i * 7 + 3) % 5;
      const auto head = split_head_tail(freq, pareto);
      const long long head_count = std::count(head.begin(), head.end(), true);
      CHECK(head_count == static_cast<long long>(std::ceil(pareto * m - 1e-9)));
      // every head frequency >= every tail frequency
      long long min_head = 1'000'000, max_tail = -1;
      for (int i = 0; i < m; ++i) {
        if (head[i]) min_head = std::min(min_head, freq[i]);
        else max_tail = std::max(max_tail, freq[i]);
      }
      if (max_tail >= 0) CHECK(min_head >= max_tail);
    }
  }
}

TEST_CASE("preprocess: filtering, augmentation, splits") {
  // 1 session [a,b] with min_item_freq 1 -> single instance ([a],b)
  const std::vector<RawEvent> tiny{{"s1", "a", 1, ""}, {"s1", "b", 2, ""}};
  PreprocessOptions opt;
  opt.min_item_freq = 1;
  opt.test_fraction = 0.5;  // floor(0.5 * 1) = 0 test sessions
  const Dataset one = preprocess(tiny, {}, opt);
  REQUIRE(one.sessions.size() == 1);
  CHECK(one.sessions[0].items.size() == 1);
  CHECK(one.catalog.item_ids[one.sessions[0].label] == "b");

  // [a,b,c,d] -> ([a],b), ([a,b],c), ([a,b,c],d)
  std::vector<RawEvent> four{
      {"s1", "a", 1, ""}, {"s1", "b", 2, ""}, {"s1", "c", 3, ""}, {"s1", "d", 4, ""}};
  const Dataset aug = preprocess(four, {}, opt);
  CHECK(aug.sessions.size() == 3);

  // item below the frequency threshold disappears from the catalog
  std::vector<RawEvent> freq_events;
  for (int s = 0; s < 6; ++s) {
    freq_events.push_back({"s" + std::to_string(s), "common1", s * 10, ""});
    freq_events.push_back({"s" + std::to_string(s), "common2", s * 10 + 1, ""});
    if (s < 4) freq_events.push_back({"s" + std::to_string(s), "rare", s * 10 + 2, ""});
  }
  PreprocessOptions freq_opt;
  freq_opt.min_item_freq = 5;
  freq_opt.test_fraction = 0.2;
  const Dataset filtered = preprocess(freq_events, {}, freq_opt);
  for (const auto& id : filtered.catalog.item_ids) CHECK(id != "rare");

  // all sessions filtered out -> empty-dataset error
  PreprocessOptions harsh;
  harsh.min_item_freq = 100;
  CHECK_THROWS_WITH_AS(preprocess(tiny, {}, harsh), doctest::Contains("empty"),
                       std::runtime_error);

  CHECK_THROWS_AS(preprocess(tiny, {}, PreprocessOptions{0, 2, 0.1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(preprocess(tiny, {}, PreprocessOptions{1, 1, 0.1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(preprocess(tiny, {}, PreprocessOptions{1, 2, 1.5, 1}), std::invalid_argument);
}

TEST_CASE("preprocess: attributes partition items; missing records get singletons") {
  std::vector<RawEvent> events;
  for (int s = 0; s < 4; ++s)
    for (const char* item : {"x", "y", "z"})
      events.push_back({"s" + std::to_string(s), item, s * 10, ""});
  std::map<std::string, std::string> attrs{{"x", "food"}, {"y", "food"}};
  PreprocessOptions opt;
  opt.min_item_freq = 1;
  const Dataset ds = preprocess(events, attrs, opt);
  REQUIRE(ds.catalog.n_items() == 3);
  const int xi = 0, yi = 1, zi = 2;
  CHECK(ds.catalog.attribute_of[xi] == ds.catalog.attribute_of[yi]);
  CHECK(ds.catalog.attribute_of[zi] != ds.catalog.attribute_of[xi]);
  for (int a : ds.catalog.attribute_of) {
    CHECK(a >= 0);
    CHECK(a < ds.catalog.n_attributes());
  }
}

TEST_CASE("preprocess is idempotent and blind to test-session contents") {
  std::vector<RawEvent> events;
  for (int s = 0; s < 20; ++s) {
    const std::string sid = "s" + std::to_string(s);
    for (int t = 0; t < 4; ++t)
      events.push_back({sid, "i" + std::to_string((s * 3 + t * 5) % 7), s * 100 + t, ""});
  }
  PreprocessOptions opt;
  opt.min_item_freq = 2;
  const Dataset a = preprocess(events, {}, opt);
  const Dataset b = preprocess(events, {}, opt);
  CHECK(catalog_json(a) == catalog_json(b));
  CHECK(sessions_jsonl(a) == sessions_jsonl(b));

  // Perturb items inside test sessions (the two with the latest timestamps);
  // the catalog must not move.
  auto perturbed = events;
  for (auto& e : perturbed)
    if (e.session_id == "s18" || e.session_id == "s19") e.item_id = "i0";
  const Dataset c = preprocess(perturbed, {}, opt);
  CHECK(catalog_json(a) == catalog_json(c));
}

TEST_CASE("generate_synthetic: determinism, purity at zero noise, zipf shape") {
  SynthConfig cfg;
  cfg.n_items = 300;
  cfg.n_sessions = 400;
  cfg.n_latent_intents = 4;
  cfg.seed = 5;
  const Dataset a = generate_synthetic(cfg);
  const Dataset b = generate_synthetic(cfg);
  CHECK(catalog_json(a) == catalog_json(b));
  CHECK(sessions_jsonl(a) == sessions_jsonl(b));

  SynthConfig pure = cfg;
  pure.noise_rate = 0.0;
  const Dataset p = generate_synthetic(pure);
  for (const auto& s : p.sessions) {
    const int attr = p.catalog.attribute_of[s.label];
    for (int item : s.items) CHECK(p.catalog.attribute_of[item] == attr);
  }

  SynthConfig zipf;
  zipf.n_items = 1000;
  zipf.n_sessions = 3000;
  zipf.zipf_exponent = 1.2;
  zipf.seed = 1;
  const Dataset z = generate_synthetic(zipf);
  auto counts = z.catalog.frequency;
  std::sort(counts.begin(), counts.end(), std::greater<>());
  for (std::size_t i = 1; i < counts.size(); ++i) CHECK(counts[i] <= counts[i - 1]);
  CHECK(counts.front() > counts.back());

  CHECK_THROWS_AS(generate_synthetic(SynthConfig{100, 10, 1, 1.2, 0.2, 5, 0.1, 0}),
                  std::invalid_argument);
  CHECK_THROWS_WITH_AS(generate_synthetic(SynthConfig{100, 10, 4, 1.2, 0.9, 5, 0.1, 0}),
                       doctest::Contains("noise_rate"), std::invalid_argument);
  CHECK_THROWS_AS(generate_synthetic(SynthConfig{100, 10, 4, -1.0, 0.2, 5, 0.1, 0}),
                  std::invalid_argument);
}

TEST_CASE("head flags derive from training frequencies only") {
  SynthConfig cfg;
  cfg.n_items = 100;
  cfg.n_sessions = 300;
  cfg.n_latent_intents = 4;
  cfg.seed = 2;
  const Dataset ds = generate_synthetic(cfg);
  std::vector<long long> train_freq(ds.catalog.n_items(), 0);
  for (const auto& s : ds.sessions) {
    if (s.split != Split::train) continue;
    for (int item : s.items) ++train_freq[item];
    ++train_freq[s.label];
  }
  CHECK(train_freq == ds.catalog.frequency);
  CHECK(ds.catalog.is_head == split_head_tail(train_freq, 0.2));
}

TEST_CASE("dataset dump round-trips") {
  SynthConfig cfg;
  cfg.n_items = 50;
  cfg.n_sessions = 80;
  cfg.n_latent_intents = 3;
  cfg.seed = 9;
  const Dataset ds = generate_synthetic(cfg);
  const auto dir = (fs::temp_directory_path() / "ir_dump_test").string();
  save_dataset(ds, dir);
  const Dataset back = load_dataset(dir);
  CHECK(catalog_json(ds) == catalog_json(back));
  CHECK(sessions_jsonl(ds) == sessions_jsonl(back));
  fs::remove_all(dir);
}

TEST_CASE("raw_train_sequences restores full sequences from augmented instances") {
  std::vector<RawEvent> events;
  for (int s = 0; s < 3; ++s) {
    const std::string sid = "s" + std::to_string(s);
    for (int t = 0; t < 4; ++t)
      events.push_back({sid, "i" + std::to_string(t), s * 100 + t, ""});
  }
  PreprocessOptions opt;
  opt.min_item_freq = 1;
  const Dataset ds = preprocess(events, {}, opt);
  const auto raw = raw_train_sequences(ds);
  REQUIRE(raw.size() == 3);
  for (const auto& seq : raw) {
    REQUIRE(seq.size() == 4);
    for (int t = 0; t < 4; ++t) CHECK(ds.catalog.item_ids[seq[t]] == "i" + std::to_string(t));
  }
}
