#include "mpfl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mpfl {

using nlohmann::json;

namespace {

// Reads keys out of one JSON object, tracking the dotted path for errors and
// rejecting keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(at(key), e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& get(const char* key) const { return j_.at(key); }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail(at(k), "unknown key");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& why) {
    throw ConfigError("config: " + (path.empty() ? std::string("<root>") : path) + ": " + why);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E>
E parse_enum(const std::string& path, const std::string& v, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [n, e] : names)
    if (v == n) return e;
  Section::fail(path, "unknown value '" + v + "'");
}

}  // namespace

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::mpfl: return "mpfl";
    case Algorithm::pruning_fl: return "pruning-fl";
    case Algorithm::lth: return "lth";
    case Algorithm::fedavg: return "fedavg";
  }
  return "?";
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  auto consensus_eq = [](const ConsensusParams& a, const ConsensusParams& b) {
    return a.strategy == b.strategy && a.agreement == b.agreement && a.min_keep == b.min_keep;
  };
  return name == o.name && algorithm == o.algorithm && seed == o.seed && nodes == o.nodes && dims == o.dims &&
         prune_output == o.prune_output && data == o.data && test_fraction == o.test_fraction &&
         scoring == o.scoring && norm == o.norm && increments == o.increments && target == o.target &&
         consensus_eq(consensus, o.consensus) && lr == o.lr && epochs == o.epochs && batch_size == o.batch_size &&
         final_rounds == o.final_rounds && contamination == o.contamination && transport == o.transport &&
         host == o.host && port == o.port && delta_masks == o.delta_masks && compact_weights == o.compact_weights &&
         count_headers == o.count_headers && precision_bits == o.precision_bits &&
         upload_feature_bits == o.upload_feature_bits && upload_label_bits == o.upload_label_bits;
}

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& path, const std::string& why) { Section::fail(path, why); };
  if (c.nodes < 1) fail("nodes", "must be >= 1");
  if (c.dims.size() < 2) fail("arch.dims", "need input and output dims");
  for (std::size_t i = 0; i < c.dims.size(); ++i)
    if (c.dims[i] == 0) fail("arch.dims[" + std::to_string(i) + "]", "must be > 0");
  double sum = 0.0;
  for (std::size_t i = 0; i < c.increments.size(); ++i) {
    if (!(c.increments[i] >= 0.0 && c.increments[i] < 1.0))
      fail("schedule.increments[" + std::to_string(i) + "]", "must lie in [0, 1)");
    sum += c.increments[i];
  }
  if (std::abs(sum - c.target) > 1e-9) fail("schedule.target", "must equal the sum of increments");
  if (!(c.consensus.agreement > 0.0 && c.consensus.agreement <= 1.0)) fail("consensus.agreement", "must lie in (0, 1]");
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) fail("data.test_fraction", "must lie in (0, 1)");
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) fail("training.lr", "must be > 0");
  if (c.epochs < 0) fail("training.epochs", "must be >= 0");
  if (c.batch_size < 1) fail("training.batch_size", "must be >= 1");
  if (c.final_rounds < 0) fail("training.final_rounds", "must be >= 0");
  if (c.precision_bits != 32 && c.precision_bits != 64) fail("precision_bits", "must be 32 or 64");
  if (c.upload_feature_bits < 1) fail("upload.feature_bits", "must be >= 1");
  if (c.upload_label_bits < 0) fail("upload.label_bits", "must be >= 0");
  if (const auto* s = std::get_if<SyntheticSpec>(&c.data)) {
    if (s->samples == 0) fail("data.samples", "must be > 0");
    if (s->features != c.dims.front()) fail("data.features", "must equal arch.dims[0]");
    if (static_cast<std::size_t>(s->classes) != c.dims.back()) fail("data.classes", "must equal the last arch dim");
  }
  std::set<int> used;
  for (std::size_t i = 0; i < c.contamination.size(); ++i) {
    const auto& k = c.contamination[i];
    const std::string p = "contamination[" + std::to_string(i) + "]";
    if (k.node < 0 || static_cast<std::size_t>(k.node) >= c.nodes) fail(p + ".node", "must be < nodes");
    if (!used.insert(k.node).second) fail(p + ".node", "node contaminated twice");
    if (k.kind == Contamination::clean) fail(p + ".kind", "must be noise or labels");
    if (k.kind == Contamination::noisy && !(k.sigma >= 0.0)) fail(p + ".sigma", "must be >= 0");
    if (k.kind == Contamination::shuffled_labels && !k.permutation.empty() && k.permutation.size() != c.dims.back())
      fail(p + ".permutation", "length must equal the number of classes");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section root(j, "");
  int version = ExperimentConfig::kVersion;
  root.read("version", version);
  if (version != ExperimentConfig::kVersion) Section::fail("version", "unsupported config version");
  root.read("name", c.name);
  std::string algo = to_string(c.algorithm);
  root.read("algorithm", algo);
  c.algorithm = parse_enum<Algorithm>("algorithm", algo,
                                      {{"mpfl", Algorithm::mpfl},
                                       {"pruning-fl", Algorithm::pruning_fl},
                                       {"lth", Algorithm::lth},
                                       {"fedavg", Algorithm::fedavg}});
  root.read("seed", c.seed);
  root.read("nodes", c.nodes);
  root.read("precision_bits", c.precision_bits);

  if (root.has("arch")) {
    Section s(root.get("arch"), "arch");
    s.read("dims", c.dims);
    s.read("prune_output", c.prune_output);
    s.finish();
  }
  if (root.has("data")) {
    Section s(root.get("data"), "data");
    std::string source = "synthetic";
    s.read("source", source);
    s.read("test_fraction", c.test_fraction);
    if (source == "synthetic") {
      SyntheticSpec spec;
      s.read("samples", spec.samples);
      s.read("features", spec.features);
      s.read("classes", spec.classes);
      s.read("separation", spec.separation);
      s.read("seed", spec.seed);
      c.data = spec;
    } else if (source == "csv") {
      std::string path;
      s.read("path", path);
      c.data = CsvSource{path};
    } else if (source == "idx") {
      std::string images, labels;
      s.read("images", images);
      s.read("labels", labels);
      c.data = IdxSource{images, labels};
    } else {
      Section::fail("data.source", "unknown value '" + source + "'");
    }
    s.finish();
  }
  if (root.has("scoring")) {
    Section s(root.get("scoring"), "scoring");
    std::string mode = "weight";
    int p = 2;
    s.read("mode", mode);
    s.read("p", p);
    c.scoring = parse_enum<ScoreMode>("scoring.mode", mode, {{"weight", ScoreMode::weight}, {"gradient", ScoreMode::gradient}});
    if (p != 1 && p != 2) Section::fail("scoring.p", "must be 1 or 2");
    c.norm = p == 1 ? NormOrder::l1 : NormOrder::l2;
    s.finish();
  }
  if (root.has("schedule")) {
    Section s(root.get("schedule"), "schedule");
    s.read("increments", c.increments);
    double sum = 0.0;
    for (double x : c.increments) sum += x;
    c.target = sum;
    s.read("target", c.target);
    s.finish();
  }
  if (root.has("consensus")) {
    Section s(root.get("consensus"), "consensus");
    std::string strategy = "topk";
    s.read("strategy", strategy);
    c.consensus.strategy = parse_enum<ConsensusStrategy>(
        "consensus.strategy", strategy, {{"topk", ConsensusStrategy::topk}, {"histogram", ConsensusStrategy::histogram}});
    s.read("agreement", c.consensus.agreement);
    s.read("min_keep", c.consensus.min_keep);
    s.finish();
  }
  if (root.has("training")) {
    Section s(root.get("training"), "training");
    s.read("lr", c.lr);
    s.read("epochs", c.epochs);
    s.read("batch_size", c.batch_size);
    s.read("final_rounds", c.final_rounds);
    s.finish();
  }
  if (root.has("contamination")) {
    const auto& arr = root.get("contamination");
    if (!arr.is_array()) Section::fail("contamination", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string p = "contamination[" + std::to_string(i) + "]";
      Section s(arr[i], p);
      ContaminationSpec k;
      std::string kind = "noise";
      s.read("node", k.node);
      s.read("kind", kind);
      k.kind = parse_enum<Contamination>(p + ".kind", kind,
                                         {{"noise", Contamination::noisy}, {"labels", Contamination::shuffled_labels}});
      s.read("sigma", k.sigma);
      s.read("permutation", k.permutation);
      s.finish();
      c.contamination.push_back(k);
    }
  }
  if (root.has("transport")) {
    Section s(root.get("transport"), "transport");
    std::string kind = "loopback";
    s.read("kind", kind);
    c.transport = parse_enum<TransportKind>("transport.kind", kind, {{"loopback", TransportKind::loopback}, {"tcp", TransportKind::tcp}});
    s.read("host", c.host);
    s.read("port", c.port);
    s.read("delta_masks", c.delta_masks);
    s.read("compact_weights", c.compact_weights);
    s.read("count_headers", c.count_headers);
    s.finish();
  }
  if (root.has("upload")) {
    Section s(root.get("upload"), "upload");
    s.read("feature_bits", c.upload_feature_bits);
    s.read("label_bits", c.upload_label_bits);
    s.finish();
  }
  root.finish();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  json j;
  j["version"] = ExperimentConfig::kVersion;
  j["name"] = c.name;
  j["algorithm"] = to_string(c.algorithm);
  j["seed"] = c.seed;
  j["nodes"] = c.nodes;
  j["arch"] = {{"dims", c.dims}, {"prune_output", c.prune_output}};
  json data;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SyntheticSpec>)
          data = {{"source", "synthetic"}, {"samples", s.samples}, {"features", s.features},
                  {"classes", s.classes},  {"separation", s.separation}, {"seed", s.seed}};
        else if constexpr (std::is_same_v<T, CsvSource>)
          data = {{"source", "csv"}, {"path", s.path.string()}};
        else
          data = {{"source", "idx"}, {"images", s.images.string()}, {"labels", s.labels.string()}};
      },
      c.data);
  data["test_fraction"] = c.test_fraction;
  j["data"] = data;
  j["scoring"] = {{"mode", c.scoring == ScoreMode::weight ? "weight" : "gradient"}, {"p", static_cast<int>(c.norm)}};
  j["schedule"] = {{"increments", c.increments}, {"target", c.target}};
  j["consensus"] = {{"strategy", c.consensus.strategy == ConsensusStrategy::topk ? "topk" : "histogram"},
                    {"agreement", c.consensus.agreement},
                    {"min_keep", c.consensus.min_keep}};
  j["training"] = {{"lr", c.lr}, {"epochs", c.epochs}, {"batch_size", c.batch_size}, {"final_rounds", c.final_rounds}};
  j["contamination"] = json::array();
  for (const auto& k : c.contamination) {
    json e = {{"node", k.node}, {"kind", k.kind == Contamination::noisy ? "noise" : "labels"}};
    if (k.kind == Contamination::noisy)
      e["sigma"] = k.sigma;
    else
      e["permutation"] = k.permutation;
    j["contamination"].push_back(e);
  }
  j["transport"] = {{"kind", c.transport == TransportKind::loopback ? "loopback" : "tcp"},
                    {"host", c.host},
                    {"port", c.port},
                    {"delta_masks", c.delta_masks},
                    {"compact_weights", c.compact_weights},
                    {"count_headers", c.count_headers}};
  j["precision_bits"] = c.precision_bits;
  j["upload"] = {{"feature_bits", c.upload_feature_bits}, {"label_bits", c.upload_label_bits}};
  return j.dump(2) + "\n";
}

}  // namespace mpfl
