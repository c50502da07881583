#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <tuple>

#include "emgtl/errors.hpp"
#include "emgtl/features.hpp"
#include "emgtl/harness.hpp"
#include "emgtl/nn/checkpoint.hpp"
#include "emgtl/stats.hpp"
#include "emgtl/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace emgtl;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> seeds;
  std::string out;
};

ExperimentConfig make_config(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(g.config);
  if (g.seeds) {
    cfg.seeds.clear();
    for (std::size_t i = 0; i < *g.seeds; ++i) cfg.seeds.push_back(i);
  }
  if (g.seed) cfg.seeds = {*g.seed};
  if (!g.out.empty()) cfg.out = g.out;
  return cfg;
}

fs::path out_dir(const Globals& g, const ExperimentConfig& cfg) {
  if (!g.out.empty()) return g.out;
  if (!cfg.out.empty()) return cfg.out;
  return fs::current_path();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    f.push_back(cell);
  }
  return f;
}

int to_int(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw DataError(where + ": not an integer '" + s + "'");
  }
}

double to_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw DataError(where + ": not a number '" + s + "'");
  }
}

// Flat CSV: subject,round,cycle,gesture,ch0..ch7 with a header row. Rows of
// one hold must be contiguous.
std::vector<EmgRecording> read_flat_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError(file.string() + ": cannot open");
  std::string line;
  std::getline(in, line);
  if (split_csv(line).size() != 4 + kChannels) throw DataError(file.string() + ": expected 12 header columns");
  std::map<std::tuple<int, int, int, int>, std::size_t> index;
  std::vector<EmgRecording> recs;
  std::size_t line_no = 1;
  std::optional<std::tuple<int, int, int, int>> current;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::string where = file.string() + ":" + std::to_string(line_no);
    const auto f = split_csv(line);
    if (f.size() != 4 + kChannels) throw DataError(where + ": expected 12 columns");
    const auto key = std::make_tuple(to_int(f[0], where), to_int(f[1], where), to_int(f[2], where),
                                     to_int(f[3], where));
    if (!current || *current != key) {
      if (index.count(key)) throw DataError(where + ": rows of one recording are not contiguous");
      index[key] = recs.size();
      EmgRecording r;
      std::tie(r.subject_id, r.round, r.cycle, r.gesture) = key;
      recs.push_back(std::move(r));
      current = key;
    }
    auto& r = recs.back();
    for (std::size_t c = 0; c < kChannels; ++c) r.samples[c].push_back(to_int(f[4 + c], where));
  }
  for (const auto& r : recs) r.validate();
  return recs;
}

int cmd_convert(const Globals& g, bool synthetic, const SyntheticSpec& syn, const std::string& input,
                const std::string& schema) {
  if (g.out.empty()) throw ConfigError("convert needs --out");
  if (synthetic == !input.empty()) throw ConfigError("convert needs exactly one of --synthetic or --input");
  const DatasetSchema sch = parse_schema(schema);
  std::vector<EmgRecording> recs;
  DatasetManifest manifest;
  if (synthetic) {
    SyntheticSpec s = syn;
    if (g.seed) s.seed = *g.seed;
    recs = make_synthetic_recordings(s);
    manifest = synthetic_manifest(s.gestures, sch);
  } else {
    recs = read_flat_csv(input);
    int gestures = 0;
    for (const auto& r : recs) gestures = std::max(gestures, r.gesture + 1);
    manifest = synthetic_manifest(gestures, sch);
  }
  write_dataset(g.out, manifest, recs);
  std::cout << "wrote " << recs.size() << " recordings to " << g.out << '\n';
  return kOk;
}

int cmd_extract(const Globals& g, const std::string& dataset, const std::string& set_name, std::size_t stride,
                const std::string& output) {
  if (dataset.empty()) throw ConfigError("extract needs --dataset");
  const FeatureSet set = parse_feature_set(set_name);
  const auto recs = load_dataset(dataset);
  std::vector<Window> windows;
  for (const auto& r : recs) {
    auto w = slice_windows(r, stride);
    windows.insert(windows.end(), w.begin(), w.end());
  }
  const auto features = extract_features(windows, set);
  fs::path file = output;
  if (file.empty()) file = (g.out.empty() ? fs::current_path() : fs::path(g.out)) / ("features_" + set_name + ".csv");
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  out.precision(17);
  out << "subject,round,cycle,offset";
  for (const auto& d : feature_layout(set)) out << ',' << d.column_name();
  out << ",label\n";
  std::size_t degenerate = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const Window& w = windows[i];
    out << w.subject_id << ',' << w.round << ',' << w.cycle << ',' << w.offset;
    for (double v : features[i].values) out << ',' << v;
    out << ',' << w.label << '\n';
    degenerate += features[i].degenerate.empty() ? 0 : 1;
  }
  std::cout << "wrote " << windows.size() << " rows to " << file.string() << '\n';
  if (degenerate > 0) std::cerr << "warning: " << degenerate << " windows had degenerate features\n";
  return kOk;
}

int cmd_train(const Globals& g, const std::string& dataset, const std::string& source) {
  ExperimentConfig cfg = make_config(g);
  if (!dataset.empty()) cfg.dataset = dataset;
  if (!source.empty()) cfg.source_checkpoint = source;
  cfg.out = out_dir(g, cfg);
  cfg.validate();
  const RunReport rep = run_experiment(cfg);
  write_run_report(rep, cfg.out);
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& m : rep.methods)
    std::cout << m.method << ": mean " << m.mean << " sd " << m.pooled_sd << '\n';
  return kOk;
}

int cmd_pretrain(const Globals& g, const std::string& dataset) {
  ExperimentConfig cfg = make_config(g);
  if (!dataset.empty()) cfg.pretrain_dataset = dataset;
  cfg.out = out_dir(g, cfg);
  const fs::path path = run_pretrain(cfg);
  std::cout << "source network written to " << path.string() << '\n';
  return kOk;
}

int cmd_evaluate(const Globals& g, const std::string& dataset, const std::string& checkpoint) {
  ExperimentConfig cfg = make_config(g);
  if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
  // without --config, reuse the protocol the checkpoint was trained under
  if (g.config.empty() && !cfg.checkpoint.empty()) {
    const json doc = nn::read_checkpoint(cfg.checkpoint);
    if (doc.contains("experiment")) {
      ExperimentConfig saved = ExperimentConfig::from_json(doc.at("experiment"));
      saved.checkpoint = cfg.checkpoint;
      saved.out = cfg.out;
      if (g.seed || g.seeds) saved.seeds = cfg.seeds;
      cfg = std::move(saved);
    }
  }
  if (!dataset.empty()) cfg.dataset = dataset;
  if (cfg.dataset.empty()) throw ConfigError("evaluate needs a dataset");
  auto data = open_dataset(cfg.dataset);
  const double acc = run_evaluate(cfg, *data);
  std::cout << "accuracy " << acc << '\n';
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    std::ofstream(fs::path(g.out) / "evaluation.json")
        << json{{"checkpoint", cfg.checkpoint.string()}, {"accuracy", acc}}.dump(2) << '\n';
  }
  return kOk;
}

int cmd_replay(const Globals& g, const std::string& session, const std::string& checkpoint, bool keep_first) {
  ExperimentConfig cfg = make_config(g);
  if (!session.empty()) cfg.session = session;
  if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
  if (keep_first) cfg.skip_first_second = false;
  if (cfg.session.empty() || cfg.checkpoint.empty()) throw ConfigError("replay needs a session and a checkpoint");
  const auto timeline = run_session_replay(cfg.session, cfg.checkpoint, cfg.skip_first_second);
  const std::string csv = replay_csv(timeline);
  if (g.out.empty() && cfg.out.empty()) {
    std::cout << csv;
  } else {
    const fs::path dir = out_dir(g, cfg);
    fs::create_directories(dir);
    std::ofstream(dir / "replay.csv") << csv;
    std::cout << "wrote " << timeline.size() << " holds to " << (dir / "replay.csv").string() << '\n';
  }
  return kOk;
}

int cmd_report(const Globals& g, const std::vector<std::string>& files) {
  std::vector<RunReport> reports;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw DataError(f + ": cannot open");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw DataError(f + ": " + e.what());
    }
    reports.push_back(RunReport::from_json(j));
  }
  const ComparisonReport cmp = emit_report(reports);
  const fs::path dir = g.out.empty() ? fs::current_path() : fs::path(g.out);
  write_comparison(cmp, dir);
  for (std::size_t m = 0; m < cmp.methods.size(); ++m) std::cout << cmp.methods[m] << ": " << cmp.means[m] << '\n';
  if (!cmp.tests.is_null()) std::cout << cmp.tests.dump(2) << '\n';
  return kOk;
}

// Table CSV: header "<id>,<method>,..." then one row per dataset/subject.
int cmd_stats(const Globals& g, const std::string& input, std::size_t bonferroni_m) {
  std::ifstream in(input);
  if (!in) throw DataError(input + ": cannot open");
  std::string line;
  std::getline(in, line);
  const auto header = split_csv(line);
  if (header.size() < 3) throw DataError(input + ": need an id column and at least two methods");
  const std::vector<std::string> methods(header.begin() + 1, header.end());
  std::vector<std::vector<double>> table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    const std::string where = input + ":" + std::to_string(line_no);
    if (f.size() != header.size()) throw DataError(where + ": column count differs from the header");
    std::vector<double> row;
    for (std::size_t i = 1; i < f.size(); ++i) row.push_back(to_double(f[i], where));
    table.push_back(std::move(row));
  }
  json out;
  if (methods.size() == 2) {
    std::vector<double> a, b;
    for (const auto& r : table) {
      a.push_back(r[0]);
      b.push_back(r[1]);
    }
    const StatResult r = wilcoxon_one_tail(a, b);
    out = {{"test", "wilcoxon_one_tail"}, {"hypothesis", methods[0] + " > " + methods[1]},
           {"statistic", r.statistic},    {"p_value", r.p_value},
           {"n", r.n},                    {"exact", r.exact},
           {"reject_h0", r.reject_h0}};
    if (bonferroni_m > 0) {
      out["p_bonferroni"] = bonferroni(r.p_value, bonferroni_m);
      out["threshold"] = bonferroni_threshold(kAlpha, bonferroni_m);
      out["reject_h0"] = r.p_value < bonferroni_threshold(kAlpha, bonferroni_m);
    }
  } else {
    const FriedmanResult r = friedman_holm(table);
    json cmp = json::array();
    for (std::size_t i = 0; i < r.compared.size(); ++i)
      cmp.push_back({{"method", methods[r.compared[i]]},
                     {"z", r.z[i]},
                     {"p_raw", r.p_raw[i]},
                     {"p_holm", r.p_holm[i]},
                     {"reject_h0", static_cast<bool>(r.reject_holm[i])}});
    out = {{"test", "friedman_holm"}, {"methods", methods},         {"mean_ranks", r.mean_ranks},
           {"chi_square", r.chi_square}, {"p_value", r.p_value},   {"reject_h0", r.reject_h0},
           {"best", methods[r.best]},   {"comparisons", cmp}};
  }
  std::cout << out.dump(2) << '\n';
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    std::ofstream(fs::path(g.out) / "stats.json") << out.dump(2) << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EMG gesture recognition experiments"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "experiment config (JSON)");
  app.add_option("--seed", g.seed, "run a single seed");
  app.add_option("--seeds", g.seeds, "run seeds 0..N-1");
  app.add_option("--out", g.out, "output directory");
  app.fallthrough();

  auto* convert = app.add_subcommand("convert", "write a dataset in the canonical layout");
  bool synthetic = false;
  SyntheticSpec syn;
  std::string input, schema = "myo";
  convert->add_flag("--synthetic", synthetic, "generate a synthetic dataset");
  convert->add_option("--input", input, "flat CSV: subject,round,cycle,gesture,ch0..ch7");
  convert->add_option("--schema", schema, "myo or ninapro");
  convert->add_option("--subjects", syn.subjects);
  convert->add_option("--gestures", syn.gestures);
  convert->add_option("--rounds", syn.rounds);
  convert->add_option("--cycles", syn.cycles);
  convert->add_option("--samples", syn.samples_per_hold, "samples per hold");
  convert->add_option("--noise", syn.noise);
  convert->add_flag("--rotate-subjects", syn.rotate_subjects);

  auto* extract = app.add_subcommand("extract", "write a feature matrix as CSV");
  std::string dataset, feature_set = "td", output;
  std::size_t stride = kDefaultStride;
  extract->add_option("--dataset", dataset)->required();
  extract->add_option("--features", feature_set, "td, enhanced-td, ninapro or sampen");
  extract->add_option("--stride", stride);
  extract->add_option("--output", output, "CSV file");

  auto* pretrain = app.add_subcommand("pretrain", "train and freeze a source network");
  pretrain->add_option("--dataset", dataset, "pre-training dataset");

  auto* train = app.add_subcommand("train", "run an experiment protocol");
  std::string source;
  train->add_option("--dataset", dataset);
  train->add_option("--source", source, "source network checkpoint");

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on its subject's test data");
  std::string checkpoint;
  evaluate->add_option("--dataset", dataset);
  evaluate->add_option("--checkpoint", checkpoint);

  auto* replay = app.add_subcommand("replay", "classify a recorded session hold by hold");
  std::string session;
  bool keep_first = false;
  replay->add_option("--session", session);
  replay->add_option("--checkpoint", checkpoint);
  replay->add_flag("--keep-first-second", keep_first, "score the first second of each hold too");

  auto* report = app.add_subcommand("report", "compare run reports");
  std::vector<std::string> report_files;
  report->add_option("reports", report_files, "report.json files")->required();

  auto* stats = app.add_subcommand("stats", "Wilcoxon or Friedman+Holm on a score table");
  std::size_t bonferroni_m = 0;
  stats->add_option("--input", input, "CSV table, one column per method")->required();
  stats->add_option("--bonferroni", bonferroni_m, "number of comparisons to correct for");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*convert) return cmd_convert(g, synthetic, syn, input, schema);
    if (*extract) return cmd_extract(g, dataset, feature_set, stride, output);
    if (*pretrain) return cmd_pretrain(g, dataset);
    if (*train) return cmd_train(g, dataset, source);
    if (*evaluate) return cmd_evaluate(g, dataset, checkpoint);
    if (*replay) return cmd_replay(g, session, checkpoint, keep_first);
    if (*report) return cmd_report(g, report_files);
    if (*stats) return cmd_stats(g, input, bonferroni_m);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kConfig;
}
