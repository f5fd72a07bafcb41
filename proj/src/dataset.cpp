#include "intentrec/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "intentrec/rng.hpp"

namespace intentrec {

namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

long long parse_timestamp(const std::string& s, int line_no) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("malformed timestamp '" + s + "' at line " + std::to_string(line_no));
  if (v < 0)
    throw std::runtime_error("negative timestamp at line " + std::to_string(line_no));
  return v;
}

}  // namespace

int Catalog::n_tail_items() const {
  int tail = 0;
  for (bool h : is_head)
    if (!h) ++tail;
  return tail;
}

std::vector<RawEvent> load_sessions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("sessions file not found: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("missing header in " + path);
  {
    const auto header = split_csv_line(line);
    if (header != std::vector<std::string>{"session_id", "timestamp", "item_id"})
      throw std::runtime_error("unexpected header in " + path +
                               " (want session_id,timestamp,item_id)");
  }
  std::vector<RawEvent> events;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() == 3 && f[0] == "session_id" && f[1] == "timestamp" && f[2] == "item_id")
      throw std::runtime_error("duplicate header at line " + std::to_string(line_no));
    if (f.size() != 3 || f[0].empty() || f[2].empty())
      throw std::runtime_error("malformed row at line " + std::to_string(line_no));
    RawEvent e;
    e.session_id = f[0];
    e.timestamp = parse_timestamp(f[1], line_no);
    e.item_id = f[2];
    events.push_back(std::move(e));
  }
  return events;
}

std::map<std::string, std::string> load_attributes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("attributes file not found: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("missing header in " + path);
  {
    const auto header = split_csv_line(line);
    if (header != std::vector<std::string>{"item_id", "attribute_id"})
      throw std::runtime_error("unexpected header in " + path + " (want item_id,attribute_id)");
  }
  std::map<std::string, std::string> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2 || f[0].empty() || f[1].empty())
      throw std::runtime_error("malformed row at line " + std::to_string(line_no));
    out.emplace(f[0], f[1]);  // first occurrence wins
  }
  return out;
}

std::vector<Session> augment_split(const std::vector<int>& items, const std::string& session_id,
                                   Split split, int min_prefix_len) {
  if (items.size() < 2)
    throw std::invalid_argument("augment_split: session length must be >= 2");
  if (min_prefix_len < 1) throw std::invalid_argument("augment_split: min_prefix_len must be >= 1");
  std::vector<Session> out;
  for (std::size_t p = static_cast<std::size_t>(min_prefix_len); p < items.size(); ++p) {
    Session s;
    s.items.assign(items.begin(), items.begin() + p);
    s.label = items[p];
    s.session_id = session_id;
    s.split = split;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<bool> split_head_tail(const std::vector<long long>& frequencies, double pareto) {
  if (frequencies.empty()) throw std::invalid_argument("split_head_tail: no items");
  if (!(pareto > 0.0 && pareto < 1.0))
    throw std::invalid_argument("split_head_tail: pareto must be in (0,1)");
  const int m = static_cast<int>(frequencies.size());
  // The tiny slack keeps exact products like 0.2*10 from ceiling up to 3.
  int n_head = static_cast<int>(std::ceil(pareto * m - 1e-9));
  n_head = std::clamp(n_head, 1, m);
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (frequencies[a] != frequencies[b]) return frequencies[a] > frequencies[b];
    return a < b;
  });
  std::vector<bool> head(m, false);
  for (int i = 0; i < n_head; ++i) head[order[i]] = true;
  return head;
}

namespace {

struct RawSession {
  std::string id;
  std::vector<std::pair<long long, std::string>> events;  // (timestamp, item_id) in file order
  long long last_ts = 0;
};

}  // namespace

Dataset preprocess(const std::vector<RawEvent>& events,
                   const std::map<std::string, std::string>& attributes,
                   const PreprocessOptions& opt) {
  if (opt.min_item_freq < 1) throw std::invalid_argument("preprocess: min_item_freq must be >= 1");
  if (opt.min_session_len < 2)
    throw std::invalid_argument("preprocess: min_session_len must be >= 2");
  if (!(opt.test_fraction > 0.0 && opt.test_fraction < 1.0))
    throw std::invalid_argument("preprocess: test_fraction must be in (0,1)");

  // Group events by session in first-seen order; stable sort keeps file
  // order within equal timestamps.
  std::vector<RawSession> raw;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& e : events) {
    auto [it, inserted] = slot.emplace(e.session_id, raw.size());
    if (inserted) raw.push_back(RawSession{e.session_id, {}, 0});
    raw[it->second].events.emplace_back(e.timestamp, e.item_id);
  }
  for (auto& s : raw) {
    std::stable_sort(s.events.begin(), s.events.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    s.last_ts = s.events.empty() ? 0 : s.events.back().first;
  }
  std::stable_sort(raw.begin(), raw.end(),
                   [](const RawSession& a, const RawSession& b) { return a.last_ts < b.last_ts; });

  const std::size_t n_test = static_cast<std::size_t>(opt.test_fraction * raw.size());
  const std::size_t n_train = raw.size() - n_test;

  // Item eligibility from training occurrences only; the test split never
  // influences the catalog.
  std::unordered_map<std::string, long long> train_freq;
  for (std::size_t i = 0; i < n_train; ++i)
    for (const auto& [ts, item] : raw[i].events) ++train_freq[item];

  auto eligible = [&](const std::string& item) {
    auto it = train_freq.find(item);
    return it != train_freq.end() && it->second >= opt.min_item_freq;
  };

  struct FilteredSession {
    std::string id;
    std::vector<std::string> items;
    Split split;
  };
  std::vector<FilteredSession> train_sessions;
  for (std::size_t i = 0; i < n_train; ++i) {
    FilteredSession f{raw[i].id, {}, Split::train};
    for (const auto& [ts, item] : raw[i].events)
      if (eligible(item)) f.items.push_back(item);
    if (static_cast<int>(f.items.size()) >= opt.min_session_len)
      train_sessions.push_back(std::move(f));
  }
  if (train_sessions.empty())
    throw std::runtime_error("preprocess: all training sessions filtered out (empty dataset)");

  // Catalog over items that survive in the final training sessions, indexed
  // by first appearance in time order.
  Dataset ds;
  std::unordered_map<std::string, int> index;
  for (const auto& s : train_sessions) {
    for (const auto& item : s.items) {
      if (index.emplace(item, static_cast<int>(ds.catalog.item_ids.size())).second)
        ds.catalog.item_ids.push_back(item);
    }
  }
  const int m = ds.catalog.n_items();
  ds.catalog.frequency.assign(m, 0);
  for (const auto& s : train_sessions)
    for (const auto& item : s.items) ++ds.catalog.frequency[index.at(item)];
  ds.catalog.is_head = split_head_tail(ds.catalog.frequency, 0.2);

  std::unordered_map<std::string, int> attr_index;
  ds.catalog.attribute_of.assign(m, -1);
  for (int i = 0; i < m; ++i) {
    const auto& item = ds.catalog.item_ids[i];
    auto named = attributes.find(item);
    // Items without an attribute record get a fresh singleton attribute so
    // the mapping stays total.
    const std::string attr_id = named != attributes.end() ? named->second : "auto:" + item;
    auto [it, inserted] = attr_index.emplace(attr_id, static_cast<int>(ds.catalog.attribute_ids.size()));
    if (inserted) ds.catalog.attribute_ids.push_back(attr_id);
    ds.catalog.attribute_of[i] = it->second;
  }

  std::vector<FilteredSession> test_sessions;
  for (std::size_t i = n_train; i < raw.size(); ++i) {
    FilteredSession f{raw[i].id, {}, Split::test};
    for (const auto& [ts, item] : raw[i].events)
      if (index.count(item)) f.items.push_back(item);
    if (static_cast<int>(f.items.size()) >= opt.min_session_len)
      test_sessions.push_back(std::move(f));
  }

  auto emit = [&](const FilteredSession& f) {
    std::vector<int> idx_items;
    idx_items.reserve(f.items.size());
    for (const auto& item : f.items) idx_items.push_back(index.at(item));
    auto instances = augment_split(idx_items, f.id, f.split, opt.min_prefix_len);
    for (auto& s : instances) ds.sessions.push_back(std::move(s));
  };
  for (const auto& f : train_sessions) emit(f);
  for (const auto& f : test_sessions) emit(f);

  ordered_json meta;
  meta["source"] = "preprocess";
  meta["min_item_freq"] = opt.min_item_freq;
  meta["min_session_len"] = opt.min_session_len;
  meta["test_fraction"] = opt.test_fraction;
  meta["min_prefix_len"] = opt.min_prefix_len;
  meta["raw_sessions"] = raw.size();
  ds.meta = meta.dump();
  return ds;
}

namespace {

// Cumulative Zipf weights for one group; sampling is a binary search.
struct ZipfGroup {
  std::vector<int> items;
  std::vector<double> cum;

  void finish(double exponent) {
    cum.resize(items.size());
    double acc = 0.0;
    for (std::size_t r = 0; r < items.size(); ++r) {
      acc += std::pow(static_cast<double>(r + 1), -exponent);
      cum[r] = acc;
    }
  }
  int draw(Rng& g) const {
    const double u = uniform01(g) * cum.back();
    const auto it = std::lower_bound(cum.begin(), cum.end(), u);
    const std::size_t r = std::min(static_cast<std::size_t>(it - cum.begin()), items.size() - 1);
    return items[r];
  }
};

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
  if (cfg.n_latent_intents < 2)
    throw std::invalid_argument("generate_synthetic: n_latent_intents must be >= 2");
  if (!(cfg.noise_rate >= 0.0 && cfg.noise_rate < 0.5))
    throw std::invalid_argument("generate_synthetic: noise_rate must be in [0, 0.5)");
  if (!(cfg.zipf_exponent > 0.0))
    throw std::invalid_argument("generate_synthetic: zipf_exponent must be > 0");
  if (cfg.n_items < cfg.n_latent_intents)
    throw std::invalid_argument("generate_synthetic: n_items must be >= n_latent_intents");
  if (cfg.n_sessions < 1) throw std::invalid_argument("generate_synthetic: n_sessions must be >= 1");
  if (!(cfg.mean_len >= 2.0))
    throw std::invalid_argument("generate_synthetic: mean_len must be >= 2");
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
    throw std::invalid_argument("generate_synthetic: test_fraction must be in (0,1)");

  const int m = cfg.n_items;
  const int n_groups = cfg.n_latent_intents;
  std::vector<ZipfGroup> groups(n_groups);
  std::vector<int> group_of(m);
  for (int i = 0; i < m; ++i) {
    const int g = static_cast<int>(static_cast<long long>(i) * n_groups / m);
    group_of[i] = g;
    groups[g].items.push_back(i);
  }
  for (auto& g : groups) g.finish(cfg.zipf_exponent);

  Rng rng(substream(cfg.seed, 0x53594e54ULL));  // "SYNT"
  const int n_test = static_cast<int>(cfg.test_fraction * cfg.n_sessions);
  const int n_train = cfg.n_sessions - n_test;

  Dataset ds;
  ds.sessions.reserve(cfg.n_sessions);
  for (int s = 0; s < cfg.n_sessions; ++s) {
    const int g = uniform_int(rng, 0, n_groups - 1);
    const int len = 2 + poisson(rng, cfg.mean_len - 2.0);
    Session sess;
    sess.session_id = "s" + std::to_string(s);
    sess.split = s < n_train ? Split::train : Split::test;
    sess.items.reserve(len);
    for (int t = 0; t < len; ++t) {
      int item = groups[g].draw(rng);
      if (uniform01(rng) < cfg.noise_rate) {
        int og = uniform_int(rng, 0, n_groups - 2);
        if (og >= g) ++og;
        item = groups[og].draw(rng);
      }
      sess.items.push_back(item);
    }
    sess.label = groups[g].draw(rng);
    ds.sessions.push_back(std::move(sess));
  }

  ds.catalog.item_ids.resize(m);
  for (int i = 0; i < m; ++i) ds.catalog.item_ids[i] = "i" + std::to_string(i);
  ds.catalog.frequency.assign(m, 0);
  for (const auto& sess : ds.sessions) {
    if (sess.split != Split::train) continue;
    for (int item : sess.items) ++ds.catalog.frequency[item];
    ++ds.catalog.frequency[sess.label];
  }
  ds.catalog.is_head = split_head_tail(ds.catalog.frequency, 0.2);
  ds.catalog.attribute_of = group_of;
  ds.catalog.attribute_ids.resize(n_groups);
  for (int g = 0; g < n_groups; ++g) ds.catalog.attribute_ids[g] = "a" + std::to_string(g);

  ordered_json meta;
  meta["source"] = "synthetic";
  meta["n_items"] = cfg.n_items;
  meta["n_sessions"] = cfg.n_sessions;
  meta["n_latent_intents"] = cfg.n_latent_intents;
  meta["zipf_exponent"] = cfg.zipf_exponent;
  meta["noise_rate"] = cfg.noise_rate;
  meta["mean_len"] = cfg.mean_len;
  meta["test_fraction"] = cfg.test_fraction;
  meta["seed"] = cfg.seed;
  ds.meta = meta.dump();
  return ds;
}

std::vector<std::vector<int>> raw_train_sequences(const Dataset& ds) {
  std::vector<std::vector<int>> out;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& s : ds.sessions) {
    if (s.split != Split::train) continue;
    auto [it, inserted] = slot.emplace(s.session_id, out.size());
    std::vector<int> seq = s.items;
    seq.push_back(s.label);
    if (inserted) {
      out.push_back(std::move(seq));
    } else if (seq.size() > out[it->second].size()) {
      out[it->second] = std::move(seq);
    }
  }
  return out;
}

std::string catalog_json(const Dataset& ds) {
  ordered_json j;
  j["meta"] = nlohmann::ordered_json::parse(ds.meta.empty() ? "{}" : ds.meta);
  j["n_items"] = ds.catalog.n_items();
  j["n_attributes"] = ds.catalog.n_attributes();
  j["item_ids"] = ds.catalog.item_ids;
  j["frequency"] = ds.catalog.frequency;
  std::vector<int> head(ds.catalog.is_head.begin(), ds.catalog.is_head.end());
  j["is_head"] = head;
  j["attribute_of"] = ds.catalog.attribute_of;
  j["attribute_ids"] = ds.catalog.attribute_ids;
  return j.dump(2) + "\n";
}

std::string sessions_jsonl(const Dataset& ds) {
  std::string out;
  for (const auto& s : ds.sessions) {
    ordered_json j;
    j["session_id"] = s.session_id;
    j["split"] = s.split == Split::train ? "train" : "test";
    j["items"] = s.items;
    j["label"] = s.label;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream cat(dir + "/catalog.json", std::ios::binary | std::ios::trunc);
  if (!cat) throw std::runtime_error("cannot write " + dir + "/catalog.json");
  cat << catalog_json(ds);
  std::ofstream sess(dir + "/sessions.jsonl", std::ios::binary | std::ios::trunc);
  if (!sess) throw std::runtime_error("cannot write " + dir + "/sessions.jsonl");
  sess << sessions_jsonl(ds);
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  const auto cat_path = dir + "/catalog.json";
  std::ifstream cat(cat_path);
  if (!cat) throw std::runtime_error("dataset catalog not found: " + cat_path);
  nlohmann::json j = nlohmann::json::parse(cat);
  ds.meta = j.at("meta").dump();
  ds.catalog.item_ids = j.at("item_ids").get<std::vector<std::string>>();
  ds.catalog.frequency = j.at("frequency").get<std::vector<long long>>();
  for (int h : j.at("is_head").get<std::vector<int>>()) ds.catalog.is_head.push_back(h != 0);
  ds.catalog.attribute_of = j.at("attribute_of").get<std::vector<int>>();
  ds.catalog.attribute_ids = j.at("attribute_ids").get<std::vector<std::string>>();

  const auto sess_path = dir + "/sessions.jsonl";
  std::ifstream sess(sess_path);
  if (!sess) throw std::runtime_error("dataset sessions not found: " + sess_path);
  std::string line;
  while (std::getline(sess, line)) {
    if (line.empty()) continue;
    nlohmann::json sj = nlohmann::json::parse(line);
    Session s;
    s.session_id = sj.at("session_id").get<std::string>();
    s.split = sj.at("split").get<std::string>() == "test" ? Split::test : Split::train;
    s.items = sj.at("items").get<std::vector<int>>();
    s.label = sj.at("label").get<int>();
    ds.sessions.push_back(std::move(s));
  }
  return ds;
}

}  // namespace intentrec
