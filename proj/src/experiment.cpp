#include "mpfl/experiment.hpp"

#include <cstdio>
#include <ostream>
#include <variant>

#include "mpfl/baselines.hpp"
#include "mpfl/transport.hpp"

namespace mpfl {

namespace {

// Stream ids under the config seed. Fixed so adding a consumer never shifts another.
enum Stream : std::uint64_t { split = 1, partition = 2, init = 3, nodes = 4, central = 5, noise = 100, labels = 200 };

std::uint64_t seed_for(const ExperimentConfig& cfg, std::uint64_t stream) { return Rng::derive(cfg.seed, stream).next(); }

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

template <typename T>
T expect(DecodedMessage&& d, const char* what) {
  if (auto* m = std::get_if<T>(&d.message)) return std::move(*m);
  throw TransportError(std::string("unexpected message, wanted ") + what);
}

std::unique_ptr<Transport> open_transport(const ExperimentConfig& cfg) {
  if (cfg.transport == TransportKind::tcp) {
    TcpOptions opt;
    opt.host = cfg.host;
    opt.port = cfg.port;
    return make_tcp_transport(cfg.nodes, opt);
  }
  return make_loopback_transport(cfg.nodes);
}

CodecOptions codec_for(const ExperimentConfig& cfg, const ArchSpec& arch) {
  CodecOptions c{arch};
  c.precision_bits = cfg.precision_bits;
  c.delta_masks = cfg.delta_masks;
  c.compact_weights = cfg.compact_weights;
  return c;
}

std::vector<Node> make_nodes(const ExperimentConfig& cfg, const Environment& env) {
  std::vector<Node> out;
  const auto seed = seed_for(cfg, Stream::nodes);
  for (const auto& shard : env.shards) out.emplace_back(shard, env.initial, env.node_options, seed);
  return out;
}

double test_accuracy(const Model& model, const Environment& env) {
  return accuracy(model, env.test.features, std::span<const int>(env.test.labels));
}

// Appends the row for `round`, taking its bit counts from the ledger.
class RowWriter {
 public:
  RowWriter(const ExperimentConfig& cfg, const BandwidthLedger& ledger, std::vector<MetricsRow>& rows)
      : cfg_(cfg), ledger_(ledger), rows_(rows) {}

  void add(std::uint32_t round, const char* phase, double sparsity, double acc) {
    MetricsRow r;
    r.run = cfg_.name;
    r.algorithm = to_string(cfg_.algorithm);
    r.num_nodes = cfg_.nodes;
    r.round = round;
    r.phase = phase;
    r.sparsity = sparsity;
    r.accuracy = acc;
    r.bits_up = ledger_.round_total(round, Direction::up);
    r.bits_down = ledger_.round_total(round, Direction::down);
    r.bits_up_max_node = ledger_.round_max_node(round, Direction::up);
    r.bits_down_max_node = ledger_.round_max_node(round, Direction::down);
    cumulative_ += r.bits_up + r.bits_down;
    r.cumulative_bits = cumulative_;
    rows_.push_back(std::move(r));
  }

 private:
  const ExperimentConfig& cfg_;
  const BandwidthLedger& ledger_;
  std::vector<MetricsRow>& rows_;
  std::uint64_t cumulative_ = 0;
};

template <typename F>
void in_round(std::uint32_t round, F&& body) {
  try {
    body();
  } catch (const RunError&) {
    throw;
  } catch (const std::exception& e) {
    throw RunError(e.what(), round);
  }
}

void broadcast_initial(Messenger& net, std::span<Node> nodes, const Model& w0) {
  net.broadcast(0, InitWeights{w0});
  for (auto& n : nodes) n.set_weights(expect<InitWeights>(net.recv_at_node(n.id()), "InitWeights").weights);
}

void collect_flags(RunResult& out, std::span<const Node> nodes) {
  for (const auto& n : nodes)
    if (n.flagged()) out.flagged_nodes.push_back(n.id());
}

// Shared by pruning-FL and FedAvg: the latter is the former with a zero schedule.
RunResult run_server_pruning(const ExperimentConfig& cfg, const Environment& env, const std::vector<double>& schedule) {
  RunResult out;
  RowWriter rows(cfg, out.ledger, out.rows);
  Messenger net(open_transport(cfg), codec_for(cfg, env.arch), out.ledger, cfg.count_headers);
  auto nodes = make_nodes(cfg, env);

  PruningFlServer ps{env.initial, PruneMask::all_ones(env.arch), cfg.norm, env.node_options.mask};
  in_round(0, [&] { broadcast_initial(net, nodes, env.initial); });
  rows.add(0, "init", 0.0, test_accuracy(env.initial, env));

  std::uint32_t round = 1;
  for (double inc : schedule) {
    in_round(round, [&] { pruning_fl_round(nodes, ps, inc, round, net); });
    rows.add(round, "pruning", ps.mask.sparsity(), test_accuracy(ps.global, env));
    ++round;
  }
  for (int r = 0; r < cfg.final_rounds; ++r, ++round) {
    in_round(round, [&] { pruning_fl_round(nodes, ps, 0.0, round, net); });
    rows.add(round, "final", ps.mask.sparsity(), test_accuracy(ps.global, env));
  }
  out.model = ps.global;
  out.mask = ps.mask;
  collect_flags(out, nodes);
  return out;
}

}  // namespace

const std::string& metrics_header() {
  static const std::string h =
      "run,algorithm,num_nodes,round,phase,sparsity,accuracy,bits_up,bits_down,bits_up_max_node,bits_down_max_node,"
      "cumulative_bits";
  return h;
}

std::string to_csv_line(const MetricsRow& r) {
  return r.run + "," + r.algorithm + "," + std::to_string(r.num_nodes) + "," + std::to_string(r.round) + "," +
         r.phase + "," + fixed(r.sparsity) + "," + fixed(r.accuracy) + "," + std::to_string(r.bits_up) + "," +
         std::to_string(r.bits_down) + "," + std::to_string(r.bits_up_max_node) + "," +
         std::to_string(r.bits_down_max_node) + "," + std::to_string(r.cumulative_bits);
}

void write_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << metrics_header() << '\n';
  for (const auto& r : rows) out << to_csv_line(r) << '\n';
}

Environment make_environment(const ExperimentConfig& cfg) {
  validate(cfg);
  Environment env{cfg.arch()};
  Dataset all = load(cfg.data);
  if (static_cast<std::size_t>(all.features.cols()) != env.arch.input_dim())
    throw ConfigError("config: arch.dims[0]: dataset has " + std::to_string(all.features.cols()) + " features");
  if (static_cast<std::size_t>(all.num_classes) > env.arch.output_dim())
    throw ConfigError("config: arch.dims: dataset has " + std::to_string(all.num_classes) + " classes");

  std::tie(env.train, env.test) = split_train_test(all, cfg.test_fraction, seed_for(cfg, Stream::split));
  if (env.train.size() < cfg.nodes) throw ConfigError("config: nodes: more nodes than training samples");
  env.shards = partition_iid(env.train, cfg.nodes, seed_for(cfg, Stream::partition));

  for (const auto& c : cfg.contamination) {
    auto& shard = env.shards.at(static_cast<std::size_t>(c.node));
    const auto stream = static_cast<std::uint64_t>(c.node);
    if (c.kind == Contamination::noisy) {
      shard = contaminate_noise(std::move(shard), c.sigma, seed_for(cfg, Stream::noise + stream));
    } else {
      auto perm = c.permutation;
      if (perm.empty()) {
        Rng rng = Rng::derive(cfg.seed, Stream::labels + stream);
        perm = random_derangement(static_cast<int>(env.arch.output_dim()), rng);
      }
      shard = contaminate_labels(std::move(shard), perm);
    }
  }

  Rng init_rng = Rng::derive(cfg.seed, Stream::init);
  env.initial = Model::initialized(env.arch, init_rng);

  env.node_options.train = TrainOptions{cfg.lr, cfg.epochs, cfg.batch_size};
  env.node_options.scoring = cfg.scoring;
  env.node_options.norm = cfg.norm;
  env.node_options.mask.min_keep = cfg.consensus.min_keep;
  return env;
}

RunResult run_mpfl(const ExperimentConfig& cfg, const Environment& env) {
  RunResult out;
  RowWriter rows(cfg, out.ledger, out.rows);
  Messenger net(open_transport(cfg), codec_for(cfg, env.arch), out.ledger, cfg.count_headers);
  auto nodes = make_nodes(cfg, env);
  ParameterServer ps(env.arch, cfg.nodes, cfg.consensus, cfg.increments);

  in_round(0, [&] { broadcast_initial(net, nodes, env.initial); });
  rows.add(0, "init", 0.0, test_accuracy(env.initial, env));

  // Pruning phase: only masks travel; weights stay on the nodes.
  PruneMask global = ps.state().global;
  std::uint32_t round = 1;
  while (ps.state().phase == Phase::pruning) {
    in_round(round, [&] {
      const double inc = ps.next_increment();
      for (auto& n : nodes) net.to_ps(n.id(), round, MaskUpload{n.id(), node_round(n, global, inc)});
      std::vector<PruneMask> masks;
      for (auto& n : nodes) masks.push_back(expect<MaskUpload>(net.recv_at_ps(n.id()), "MaskUpload").mask);
      net.broadcast(round, GlobalMask{ps.reduce_masks(masks)});
      for (auto& n : nodes) global = expect<GlobalMask>(net.recv_at_node(n.id()), "GlobalMask").mask;
    });
    // Evaluation only: the average of the masked local models is never sent.
    std::vector<Model> local;
    for (const auto& n : nodes) local.push_back(apply_mask(n.weights(), global));
    rows.add(round, "pruning", global.sparsity(), test_accuracy(fedavg(local), env));
    ++round;
  }

  // Final phase: standard FL on the masked model. With zero rounds the local
  // models are still uploaded once and averaged.
  Model model = env.initial;
  const int final_rounds = std::max(cfg.final_rounds, 1);
  for (int r = 0; r < final_rounds; ++r, ++round) {
    in_round(round, [&] {
      for (auto& n : nodes) {
        if (cfg.final_rounds > 0) n.train(global);
        net.to_ps(n.id(), round, WeightUpload{n.id(), apply_mask(n.weights(), global)});
      }
      std::vector<Model> uploads;
      for (auto& n : nodes) uploads.push_back(expect<WeightUpload>(net.recv_at_ps(n.id()), "WeightUpload").weights);
      model = apply_mask(fedavg(uploads), global);
      net.broadcast(round, GlobalWeights{model});
      for (auto& n : nodes) n.set_weights(expect<GlobalWeights>(net.recv_at_node(n.id()), "GlobalWeights").weights);
    });
    rows.add(round, "final", global.sparsity(), test_accuracy(model, env));
  }
  out.model = std::move(model);
  out.mask = std::move(global);
  collect_flags(out, nodes);
  return out;
}

RunResult run_pruning_fl(const ExperimentConfig& cfg, const Environment& env) {
  return run_server_pruning(cfg, env, cfg.increments);
}

RunResult run_fedavg(const ExperimentConfig& cfg, const Environment& env) {
  // Same number of communication rounds as the pruning schedule would take, no pruning.
  return run_server_pruning(cfg, env, std::vector<double>(cfg.increments.size(), 0.0));
}

RunResult run_lth(const ExperimentConfig& cfg, const Environment& env) {
  RunResult out;
  RowWriter rows(cfg, out.ledger, out.rows);
  LthOptions opt;
  opt.increments = cfg.increments;
  opt.train = env.node_options.train;
  opt.final_rounds = cfg.final_rounds;
  opt.norm = cfg.norm;
  opt.mask = env.node_options.mask;
  opt.feature_bits = cfg.upload_feature_bits;
  opt.label_bits = cfg.upload_label_bits;

  Rng rng = Rng::derive(cfg.seed, Stream::central);
  LthResult res;
  in_round(0, [&] { res = lth_central(env.train, env.shards, env.initial, opt, out.ledger, rng); });
  for (const auto& st : res.stages) rows.add(st.round, "central", st.mask.sparsity(), test_accuracy(st.model, env));
  out.model = std::move(res.model);
  out.mask = std::move(res.mask);
  return out;
}

RunResult run(const ExperimentConfig& cfg) {
  const Environment env = make_environment(cfg);
  switch (cfg.algorithm) {
    case Algorithm::mpfl: return run_mpfl(cfg, env);
    case Algorithm::pruning_fl: return run_pruning_fl(cfg, env);
    case Algorithm::lth: return run_lth(cfg, env);
    case Algorithm::fedavg: return run_fedavg(cfg, env);
  }
  throw ConfigError("config: algorithm: unknown");
}

std::vector<SummaryRow> summarize(std::span<const MetricsRow> rows) {
  std::vector<SummaryRow> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const bool last_of_level = i + 1 == rows.size() || rows[i + 1].run != r.run || rows[i + 1].sparsity != r.sparsity;
    if (!last_of_level) continue;
    out.push_back({r.run, r.algorithm, r.num_nodes, r.sparsity, r.accuracy, r.cumulative_bits, 0});
  }
  // Back-fill each run's total from its final row.
  for (std::size_t i = out.size(); i-- > 0;) {
    const bool last_of_run = i + 1 == out.size() || out[i + 1].run != out[i].run;
    out[i].total_bits = last_of_run ? out[i].bits_at_level : out[i + 1].total_bits;
  }
  return out;
}

const std::string& summary_header() {
  static const std::string h = "run,algorithm,num_nodes,sparsity,accuracy,bits_at_level,total_bits";
  return h;
}

void write_summary(std::ostream& out, std::span<const SummaryRow> rows) {
  out << summary_header() << '\n';
  for (const auto& r : rows)
    out << r.run << ',' << r.algorithm << ',' << r.num_nodes << ',' << fixed(r.sparsity) << ',' << fixed(r.accuracy)
        << ',' << r.bits_at_level << ',' << r.total_bits << '\n';
}

CompareResult compare(std::span<const ExperimentConfig> configs) {
  CompareResult out;
  for (const auto& cfg : configs) {
    try {
      auto res = run(cfg);
      out.rows.insert(out.rows.end(), res.rows.begin(), res.rows.end());
    } catch (const std::exception& e) {
      out.failures.push_back(cfg.name + ": " + e.what());
    }
  }
  out.summary = summarize(out.rows);
  return out;
}

std::vector<ExperimentConfig> sweep_nodes(const ExperimentConfig& base, std::span<const std::size_t> counts) {
  std::vector<ExperimentConfig> out;
  for (auto n : counts) {
    auto c = base;
    c.nodes = n;
    c.name = base.name + "-n" + std::to_string(n);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace mpfl
