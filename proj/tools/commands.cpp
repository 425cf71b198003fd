#include "commands.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "cli_config.hpp"
#include "gradcheck.hpp"
#include "json.hpp"
#include "visita/visita.hpp"

namespace visita::cli {

namespace {

using nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return kExitUsage;
    case ErrorKind::convergence:
    case ErrorKind::invariant:
    case ErrorKind::undefined_metric:
      return kExitCheckFailed;
    default:
      return kExitData;
  }
}

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::shape:
      return "shape";
    case ErrorKind::invalid_input:
      return "invalid_input";
    case ErrorKind::invariant:
      return "invariant";
    case ErrorKind::convergence:
      return "convergence";
    case ErrorKind::format:
      return "format";
    case ErrorKind::unsupported_format:
      return "unsupported_format";
    case ErrorKind::config:
      return "config";
    case ErrorKind::undefined_metric:
      return "undefined_metric";
    case ErrorKind::io:
      return "io";
  }
  return "error";
}

std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Config flags shared by train and eval, registered as --<key>.
struct ConfigFlags {
  std::optional<std::string> config_path;
  std::map<std::string, std::string> values;

  void add_to(CLI::App& app) {
    app.add_option("--config", config_path, "Flat key = value config file");
    for (const auto& key : CliConfig::keys()) app.add_option("--" + key, values[key], "Override config key " + key);
  }

  CliConfig resolve(const CLI::App& app) const {
    CliConfig cfg;
    if (config_path) apply_config_text(cfg, read_file(*config_path), *config_path);
    for (const auto& [key, value] : values)
      if (app.count("--" + key) > 0) cfg.set(key, value);
    cfg.validate();
    return cfg;
  }
};

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t k = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), k);
    if (ec != std::errc() || p != item.data() + item.size() || k == 0) throw ConfigError("bad k '" + item + "' in --ks");
    ks.push_back(k);
  }
  if (ks.empty()) throw ConfigError("--ks needs at least one value");
  return ks;
}

json split_counts(const PairDataset& ds) {
  return {{"train", ds.split_indices(Split::train).size()},
          {"val", ds.split_indices(Split::val).size()},
          {"test", ds.split_indices(Split::test).size()}};
}

// --- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  std::size_t pairs = 500;
  std::size_t classes = 10;
  std::uint64_t seed = 42;
  std::size_t image_size = 32;
  std::string out_dir;
};

json cmd_gen_data(const GenDataArgs& a) {
  Rng rng(a.seed);
  const SyntheticData data = generate_synthetic(a.pairs, a.classes, a.image_size, rng);
  std::filesystem::path manifest;
  try {
    manifest = write_synthetic(data, a.out_dir);
  } catch (const IoError& e) {
    throw ConfigError(std::string("output directory ") + a.out_dir + " is not writable (" + e.what() + ")");
  }
  std::vector<std::size_t> per_class(a.classes, 0);
  for (std::size_t c : data.classes) ++per_class[c];
  return {{"command", "gen-data"}, {"out_dir", a.out_dir},   {"manifest", manifest.string()},
          {"pairs", a.pairs},      {"classes", a.classes},   {"seed", a.seed},
          {"image_size", a.image_size}, {"class_counts", per_class}};
}

// --- train ------------------------------------------------------------------

json cmd_train(const CliConfig& cfg, const std::string& manifest, const std::string& out_path,
               std::optional<std::string> loss_csv, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  const PairDataset data = load_dataset(manifest, cfg.data_options());
  MatchModel model = MatchModel::init(cfg.model_config(data.vocab.size()), cfg.seed);
  TrainResult result = train(std::move(model), data, cfg.train_config());
  json out = {{"command", "train"}, {"checkpoint", out_path}, {"epochs", cfg.epochs},
              {"splits", split_counts(data)}, {"vocab_size", data.vocab.size()}};
  if (cfg.mkl_head) {
    MklHeadOptions opts;
    opts.seed = cfg.seed;
    opts.C = cfg.C;
    opts.kernel_bank = cfg.kernel_bank();
    opts.mkl = cfg.mkl_options();
    result.model.mkl_head = fit_mkl_head(result.model, data, opts);
    const auto& h = *result.model.mkl_head;
    out["mkl_head"] = {{"weights", std::vector<double>(h.weights.values().begin(), h.weights.values().end())},
                       {"dual_objective", h.solution.dual_objective},
                       {"support_count", h.support_xs.size()},
                       {"outer_iterations", h.outer_iterations},
                       {"converged", h.converged}};
  }
  save_checkpoint(out_path, result.model, data.vocab);
  const std::string csv_path = loss_csv.value_or(out_path + ".loss.csv");
  std::string csv = "epoch,mean_loss\n";
  for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
    csv += std::to_string(e + 1) + "," + format_g(result.loss_history[e]) + "\n";
  }
  write_file(csv_path, csv);
  out["loss_csv"] = csv_path;
  out["first_loss"] = result.loss_history.empty() ? json() : json(result.loss_history.front());
  out["final_loss"] = result.loss_history.empty() ? json() : json(result.loss_history.back());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  err << "train: " << result.loss_history.size() << " epochs in " << secs << " s\n";
  return out;
}

// --- eval -------------------------------------------------------------------

json cmd_eval(const CliConfig& cfg, const std::string& model_path, const std::string& manifest, const std::string& ks_text,
              const std::optional<std::string>& report_path, const std::optional<std::string>& table_path,
              const std::string& split_name, std::ostream& err) {
  const auto ks = parse_ks(ks_text);
  const Split split = parse_split(split_name);
  const Checkpoint ck = load_checkpoint(model_path);
  DataOptions opts = cfg.data_options();
  opts.image_size = ck.model.config.image_size;
  opts.caption_len = ck.model.config.caption_len;
  const PairDataset data = load_dataset(manifest, opts, ck.vocab);
  const EvalReport report = evaluate_retrieval(ck.model, data, split, ks, cfg.mkl_head);
  const std::string table = report.to_table();
  if (table_path) {
    write_file(*table_path, table);
  } else {
    err << table;
  }
  json j = json::parse(report.to_json());
  j["command"] = "eval";
  j["split"] = split_name;
  if (report_path) write_file(*report_path, j.dump(2) + "\n");
  return j;
}

// --- solve-mkl --------------------------------------------------------------

MklProblem read_labelled_csv(const std::string& path) {
  const std::string text = read_file(path);
  MklProblem p;
  std::stringstream ss(text);
  std::string line;
  std::size_t row = 0;
  while (std::getline(ss, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    const auto parse = [&](const std::string& s, double& v) {
      std::string_view sv(s);
      while (!sv.empty() && sv.front() == ' ') sv.remove_prefix(1);
      while (!sv.empty() && sv.back() == ' ') sv.remove_suffix(1);
      if (!sv.empty() && sv.front() == '+') sv.remove_prefix(1);
      auto [q, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), v);
      return ec == std::errc() && q == sv.data() + sv.size() && !sv.empty();
    };
    double first = 0.0;
    if (row == 1 && !parse(fields.front(), first)) continue;  // header
    if (fields.size() < 2) throw FormatError(path + " row " + std::to_string(row) + ": need features and a label");
    Vector x;
    for (std::size_t i = 0; i + 1 < fields.size(); ++i) {
      double v = 0.0;
      if (!parse(fields[i], v) || !std::isfinite(v)) {
        throw FormatError(path + " row " + std::to_string(row) + ": bad feature value '" + fields[i] + "'");
      }
      x.push_back(v);
    }
    double label = 0.0;
    if (!parse(fields.back(), label) || (label != 1.0 && label != -1.0)) {
      throw FormatError(path + " row " + std::to_string(row) + ": label must be -1 or 1, found '" + fields.back() + "'");
    }
    if (!p.xs.empty() && x.size() != p.xs.front().size()) {
      throw FormatError(path + " row " + std::to_string(row) + ": expected " + std::to_string(p.xs.front().size()) +
                        " features, found " + std::to_string(x.size()));
    }
    p.xs.push_back(std::move(x));
    p.ys.push_back(static_cast<int>(label));
  }
  if (p.xs.empty()) throw FormatError(path + ": no data rows");
  return p;
}

json cmd_solve_mkl(const std::string& csv, const std::string& kernels, double C, double tol, std::size_t max_outer) {
  MklProblem p = read_labelled_csv(csv);
  p.kernel_bank = parse_kernel_bank(kernels);
  p.C = C;
  MklOptions o;
  o.tol = tol;
  o.max_outer = max_outer;
  const MklModel m = train_mkl(p, o);
  std::vector<std::string> names;
  for (const auto& k : m.kernel_bank) names.push_back(k.to_string());
  return {{"command", "solve-mkl"},
          {"kernels", names},
          {"weights", std::vector<double>(m.weights.values().begin(), m.weights.values().end())},
          {"dual_objective", m.solution.dual_objective},
          {"kkt_violation", m.solution.kkt_violation},
          {"support_count", m.support_xs.size()},
          {"bias", m.solution.bias},
          {"alpha", m.solution.alpha},
          {"outer_iterations", m.outer_iterations},
          {"converged", m.converged}};
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-modal image-text matching with multiple kernel learning and transformers", "visita"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic paired dataset");
  gen_cmd->add_option("--pairs", gen.pairs, "Number of image-text pairs");
  gen_cmd->add_option("--classes", gen.classes, "Number of attribute classes (2..36)");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--image_size", gen.image_size, "Square image size");
  gen_cmd->add_option("--out", gen.out_dir, "Output directory")->required();

  ConfigFlags train_flags;
  std::string train_manifest, train_out;
  std::optional<std::string> loss_csv;
  auto* train_cmd = app.add_subcommand("train", "Train the matching model");
  train_flags.add_to(*train_cmd);
  train_cmd->add_option("--manifest", train_manifest, "Dataset manifest CSV")->required();
  train_cmd->add_option("--out", train_out, "Checkpoint output path")->required();
  train_cmd->add_option("--loss-csv", loss_csv, "Loss history CSV (default <out>.loss.csv)");

  ConfigFlags eval_flags;
  std::string eval_model, eval_manifest, ks = "1,5,10", eval_split = "test";
  std::optional<std::string> report_path, table_path;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate retrieval on a split");
  eval_flags.add_to(*eval_cmd);
  eval_cmd->add_option("--model", eval_model, "Checkpoint path")->required();
  eval_cmd->add_option("--manifest", eval_manifest, "Dataset manifest CSV")->required();
  eval_cmd->add_option("--ks", ks, "Comma-separated Recall@K cutoffs");
  eval_cmd->add_option("--eval-split", eval_split, "Split to evaluate: train, val or test");
  eval_cmd->add_option("--report", report_path, "Also write the JSON report here");
  eval_cmd->add_option("--table", table_path, "Write the text table here instead of stderr");

  std::string mkl_csv, mkl_kernels = "linear,rbf:0.5,poly:2:1";
  double mkl_C = 1.0, mkl_tol = 1e-4;
  std::size_t mkl_max_outer = 50;
  auto* mkl_cmd = app.add_subcommand("solve-mkl", "Solve an MKL-SVM problem from a labelled CSV");
  mkl_cmd->add_option("--csv", mkl_csv, "Rows of features followed by a -1/1 label")->required();
  mkl_cmd->add_option("--kernels", mkl_kernels, "Kernel bank, e.g. linear,rbf:0.5,poly:2:1");
  mkl_cmd->add_option("--C", mkl_C, "Box constraint");
  mkl_cmd->add_option("--mkl_tol", mkl_tol, "Outer weight tolerance");
  mkl_cmd->add_option("--mkl_max_outer", mkl_max_outer, "Outer iteration cap");

  GradcheckOptions gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference audit of every backward pass");
  gc_cmd->add_option("--seed", gc.seed, "Audit seed");
  gc_cmd->add_option("--instances", gc.instances, "Instances per check");
  gc_cmd->add_flag("--corrupt-backward", gc.corrupt_backward)->group("");  // test hook

  std::string command = "visita";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    err << app.help();
    out << json{{"command", "help"}, {"ok", true}}.dump() << "\n";
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    err << app.help("", CLI::AppFormatMode::All);
    out << json{{"command", "help"}, {"ok", true}}.dump() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "visita: " << e.what() << "\n";
    out << json{{"command", command}, {"error", {{"kind", "usage"}, {"message", e.what()}}}, {"exit_code", kExitUsage}}
               .dump()
        << "\n";
    return kExitUsage;
  }

  try {
    json result;
    int code = kExitOk;
    if (gen_cmd->parsed()) {
      command = "gen-data";
      result = cmd_gen_data(gen);
    } else if (train_cmd->parsed()) {
      command = "train";
      result = cmd_train(train_flags.resolve(*train_cmd), train_manifest, train_out, loss_csv, err);
    } else if (eval_cmd->parsed()) {
      command = "eval";
      result = cmd_eval(eval_flags.resolve(*eval_cmd), eval_model, eval_manifest, ks, report_path, table_path,
                        eval_split, err);
    } else if (mkl_cmd->parsed()) {
      command = "solve-mkl";
      result = cmd_solve_mkl(mkl_csv, mkl_kernels, mkl_C, mkl_tol, mkl_max_outer);
    } else if (gc_cmd->parsed()) {
      command = "gradcheck";
      const GradcheckReport report = run_gradient_audit(gc);
      err << report.table();
      result = json::parse(report.to_json());
      if (!report.pass()) {
        code = kExitCheckFailed;
        std::string failing;
        for (const auto& r : report.rows)
          if (!r.pass) failing += (failing.empty() ? "" : ", ") + r.name;
        err << "gradcheck: failing checks: " << failing << "\n";
      }
    }
    out << result.dump(2) << "\n";
    return code;
  } catch (const Error& e) {
    const int code = exit_code_for(e.kind());
    err << "visita " << command << ": " << e.what() << "\n";
    out << json{{"command", command},
                {"error", {{"kind", kind_name(e.kind())}, {"message", e.what()}}},
                {"exit_code", code}}
               .dump()
        << "\n";
    return code;
  } catch (const std::exception& e) {
    err << "visita " << command << ": " << e.what() << "\n";
    out << json{{"command", command}, {"error", {{"kind", "internal"}, {"message", e.what()}}}, {"exit_code", kExitData}}
               .dump()
        << "\n";
    return kExitData;
  }
}

}  // namespace visita::cli
