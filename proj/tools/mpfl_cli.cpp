// mpfl: run experiments, compare algorithms, check bit arithmetic, fuzz the codec.
//
//   mpfl run --config configs/mpfl_topk.json --out metrics.csv --model model.bin
//   mpfl compare --config a.json --config b.json --out all.csv --summary summary.csv
//   mpfl bits --preset vgg16
//   mpfl bits --layer 64:9 --precision 32
//   mpfl fuzz --cases 10000 --seed 1

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "mpfl/artifact.hpp"
#include "mpfl/bandwidth.hpp"
#include "mpfl/config.hpp"
#include "mpfl/experiment.hpp"
#include "mpfl/fuzz.hpp"

namespace {

using namespace mpfl;

// Flags that override config keys. Unset flags leave the file value alone.
struct Overrides {
  std::optional<std::string> name, algorithm, scoring, strategy, transport;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> nodes, batch_size, min_keep;
  std::optional<int> p, epochs, final_rounds, precision;
  std::optional<double> agreement, lr;
  std::optional<std::uint16_t> port;
  std::optional<bool> delta_masks;
  std::vector<double> increments;

  void attach(CLI::App* app) {
    app->add_option("--name", name, "run name");
    app->add_option("--algorithm", algorithm, "mpfl | pruning-fl | lth | fedavg");
    app->add_option("--seed", seed);
    app->add_option("--nodes", nodes);
    app->add_option("--scoring", scoring, "weight | gradient");
    app->add_option("--p", p, "score norm order, 1 or 2");
    app->add_option("--increments", increments, "per-round pruning increments; target becomes their sum");
    app->add_option("--strategy", strategy, "topk | histogram");
    app->add_option("--agreement", agreement);
    app->add_option("--min-keep", min_keep);
    app->add_option("--lr", lr);
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--final-rounds", final_rounds);
    app->add_option("--transport", transport, "loopback | tcp");
    app->add_option("--port", port);
    app->add_option("--delta-masks", delta_masks);
    app->add_option("--precision", precision, "weight precision in bits, 32 or 64");
  }

  // Round-trips through the JSON dialect so flag values get the same parsing
  // and validation as file values.
  ExperimentConfig apply(const std::optional<std::string>& path) const {
    ExperimentConfig c = path ? load_config(*path) : ExperimentConfig{};
    auto j = nlohmann::json::parse(serialize_config(c));
    if (name) j["name"] = *name;
    if (algorithm) j["algorithm"] = *algorithm;
    if (seed) j["seed"] = *seed;
    if (nodes) j["nodes"] = *nodes;
    if (scoring) j["scoring"]["mode"] = *scoring;
    if (p) j["scoring"]["p"] = *p;
    if (!increments.empty()) {
      j["schedule"]["increments"] = increments;
      double sum = 0.0;
      for (double x : increments) sum += x;
      j["schedule"]["target"] = sum;
    }
    if (strategy) j["consensus"]["strategy"] = *strategy;
    if (agreement) j["consensus"]["agreement"] = *agreement;
    if (min_keep) j["consensus"]["min_keep"] = *min_keep;
    if (lr) j["training"]["lr"] = *lr;
    if (epochs) j["training"]["epochs"] = *epochs;
    if (batch_size) j["training"]["batch_size"] = *batch_size;
    if (final_rounds) j["training"]["final_rounds"] = *final_rounds;
    if (transport) j["transport"]["kind"] = *transport;
    if (port) j["transport"]["port"] = *port;
    if (delta_masks) j["transport"]["delta_masks"] = *delta_masks;
    if (precision) j["precision_bits"] = *precision;
    return parse_config(j.dump());
  }
};

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  return f;
}

int cmd_run(const std::optional<std::string>& config, const Overrides& ov, const std::string& out,
            const std::string& model_path) {
  const auto cfg = ov.apply(config);
  const auto res = run(cfg);
  if (out == "-") {
    write_csv(std::cout, res.rows);
  } else {
    auto f = open_out(out);
    write_csv(f, res.rows);
  }
  if (!model_path.empty()) write_artifact(model_path, res.model, res.mask);
  const auto& last = res.rows.back();
  std::fprintf(stderr, "%s: %zu rounds, sparsity %.4f, accuracy %.4f, %llu bits\n", cfg.name.c_str(), res.rows.size(),
               last.sparsity, last.accuracy, static_cast<unsigned long long>(last.cumulative_bits));
  for (int n : res.flagged_nodes) std::fprintf(stderr, "node %d diverged and was rolled back\n", n);
  return 0;
}

int cmd_compare(const std::vector<std::string>& configs, const std::vector<std::size_t>& sweep, const std::string& out,
                const std::string& summary) {
  std::vector<ExperimentConfig> cfgs;
  for (const auto& path : configs) {
    auto c = load_config(path);
    if (sweep.empty()) {
      cfgs.push_back(std::move(c));
    } else {
      for (auto& s : sweep_nodes(c, sweep)) cfgs.push_back(std::move(s));
    }
  }
  const auto res = compare(cfgs);
  auto f = open_out(out);
  write_csv(f, res.rows);
  if (!summary.empty()) {
    auto s = open_out(summary);
    write_summary(s, res.summary);
  }
  write_summary(std::cout, res.summary);
  for (const auto& e : res.failures) std::fprintf(stderr, "failed: %s\n", e.c_str());
  return res.failures.empty() ? 0 : 1;
}

int cmd_bits(const std::string& preset, const std::vector<std::string>& layer_args, int precision) {
  std::uint64_t dense = 0, mask = 0;
  if (!layer_args.empty()) {
    std::vector<BitTerm> terms;
    for (const auto& a : layer_args) {
      const auto colon = a.find(':');
      if (colon == std::string::npos) throw ConfigError("--layer expects GROUPS:WEIGHTS, got " + a);
      terms.push_back({std::stoull(a.substr(0, colon)), std::stoull(a.substr(colon + 1))});
    }
    dense = dense_bits(terms, precision);
    mask = mask_bits(terms);
    std::printf("precision: %d\n", precision);
  } else if (preset == "vgg16") {
    const auto d = vgg16_published_dense_expression();
    const auto m = vgg16_published_mask_expression();
    dense = sum_of_products(d);
    mask = sum_of_products(m);
    const auto layers = vgg16_sketch_layers();
    std::printf("preset: vgg16 (%zu layers)\n", layers.size());
    std::printf("uniform_dense_bits (b=%d): %llu\n", precision,
                static_cast<unsigned long long>(dense_bits(layers, precision)));
  } else {
    throw ConfigError("unknown preset " + preset);
  }
  std::printf("dense_bits: %llu\n", static_cast<unsigned long long>(dense));
  std::printf("mask_bits: %llu\n", static_cast<unsigned long long>(mask));
  std::printf("savings: %.2f%%\n", 100.0 * (1.0 - static_cast<double>(mask) / static_cast<double>(dense)));
  return 0;
}

int cmd_fuzz(std::size_t cases, std::uint64_t seed) {
  const auto r = fuzz_codec(cases, seed);
  std::printf("cases: %zu\nroundtrip_failures: %zu\ncorrupt_frames: %zu (rejected %zu, accepted %zu)\n"
              "unexpected_errors: %zu\n",
              r.cases, r.roundtrip_failures, r.corrupt_frames, r.corrupt_rejected, r.corrupt_accepted,
              r.unexpected_errors);
  for (const auto& s : r.samples) std::printf("  %s\n", s.c_str());
  return r.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mask-based pruned federated learning experiments"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "run one experiment");
  std::optional<std::string> config;
  std::string out = "metrics.csv", model_path;
  Overrides ov;
  run_cmd->add_option("--config,-c", config, "JSON config file");
  run_cmd->add_option("--out,-o", out, "metrics CSV path, - for stdout");
  run_cmd->add_option("--model,-m", model_path, "write the final masked model here");
  ov.attach(run_cmd);

  auto* cmp_cmd = app.add_subcommand("compare", "run several configs and merge their metrics");
  std::vector<std::string> configs;
  std::vector<std::size_t> sweep;
  std::string cmp_out = "compare.csv", summary;
  cmp_cmd->add_option("--config,-c", configs, "JSON config files")->required();
  cmp_cmd->add_option("--sweep-nodes", sweep, "run every config once per node count")->delimiter(',');
  cmp_cmd->add_option("--out,-o", cmp_out, "combined metrics CSV");
  cmp_cmd->add_option("--summary", summary, "summary CSV");

  auto* bits_cmd = app.add_subcommand("bits", "dense vs mask traffic for a layer list");
  std::string preset = "vgg16";
  std::vector<std::string> layers;
  int precision = 64;
  bits_cmd->add_option("--preset", preset, "vgg16");
  bits_cmd->add_option("--layer", layers, "GROUPS:WEIGHTS_PER_GROUP, repeatable");
  bits_cmd->add_option("--precision,-b", precision, "bits per weight")->check(CLI::IsMember({32, 64}));

  auto* fuzz_cmd = app.add_subcommand("fuzz", "round-trip and corrupt-frame fuzzing of the wire codec");
  std::size_t cases = 10000;
  std::uint64_t seed = 1;
  fuzz_cmd->add_option("--cases", cases);
  fuzz_cmd->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return cmd_run(config, ov, out, model_path);
    if (*cmp_cmd) return cmd_compare(configs, sweep, cmp_out, summary);
    if (*bits_cmd) return cmd_bits(preset, layers, precision);
    if (*fuzz_cmd) return cmd_fuzz(cases, seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
