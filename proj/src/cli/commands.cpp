#include <httplib.h>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "stackvet/cli.hpp"
#include "stackvet/review.hpp"
#include "stackvet/triage.hpp"
#include "stackvet/version.hpp"

namespace stackvet {
namespace {

namespace fs = std::filesystem;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void ensure_writable_dir(const fs::path& dir) {
  if (dir.empty()) throw UsageError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw UsageError("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

void require_path(const fs::path& p, const char* flag) {
  if (p.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::exists(p)) throw UsageError(std::string(flag) + " path does not exist: " + p.string());
}

std::vector<Model<float>> load_models(const fs::path& dir, std::vector<ModelFileExtras>* extras = nullptr) {
  std::vector<Model<float>> models;
  for (const auto& f : model_files(dir)) {
    ModelFileExtras e;
    models.push_back(load_model(f, &e));
    if (extras) extras->push_back(std::move(e));
  }
  if (models.empty()) throw UsageError("no fold*.mdl model files in " + dir.string());
  return models;
}

struct Options {
  fs::path config;
  std::uint64_t seed = 0;
  fs::path out;
  std::string combo;
  std::string model;
  std::string cbam;
  std::uint16_t port = 8080;
  fs::path data;
  fs::path models;
  fs::path scores;
  fs::path stats_from;
  fs::path policy;
  fs::path log;
  fs::path ui;
  std::string host = "127.0.0.1";
  std::size_t samples = 0;
  double positive_fraction = 0.0;
  std::size_t epochs = 0;
  std::size_t folds = 0;
  double threshold = 0.5;
  double min_precision = 0.0;
  double min_inverse_precision = 0.0;
  double step = 0.01;
  double pos = 0.0;
  double neg = 0.0;
  bool augment = false;
  bool permute = false;
};

struct Flags {
  std::vector<CLI::Option*> seeds;
  CLI::Option* combo = nullptr;
  CLI::Option* train_combo = nullptr;
  CLI::Option* model = nullptr;
  CLI::Option* cbam = nullptr;
  CLI::Option* samples = nullptr;
  CLI::Option* positive_fraction = nullptr;
  CLI::Option* epochs = nullptr;
  CLI::Option* folds = nullptr;
  CLI::Option* threshold = nullptr;
  CLI::Option* min_precision = nullptr;
  CLI::Option* min_inverse_precision = nullptr;
  CLI::Option* step = nullptr;
  CLI::Option* augment = nullptr;
  CLI::Option* permute = nullptr;
  CLI::Option* pos = nullptr;
  CLI::Option* neg = nullptr;
};

bool given(const CLI::Option* o) { return o && o->count() > 0; }

// defaults < --config file < flags
RunConfig resolve(const Options& o, const Flags& f) {
  RunConfig c = default_run_config();
  if (!o.config.empty()) c = load_run_config(o.config, c);
  if (std::any_of(f.seeds.begin(), f.seeds.end(), given)) c.seed = o.seed;
  try {
    if (given(f.combo) || given(f.train_combo)) c.generator.combo = parse_combo(o.combo);
  } catch (const ArgumentError& e) {
    throw UsageError(std::string("--combo: ") + e.what());
  }
  if (given(f.model)) c.model = o.model;
  if (given(f.cbam)) c.cbam = o.cbam == "on";
  if (given(f.samples)) c.generator.samples = o.samples;
  if (given(f.positive_fraction)) c.generator.positive_fraction = o.positive_fraction;
  if (given(f.augment)) c.generator.augment = o.augment;
  if (given(f.permute)) c.generator.permute_channels = o.permute;
  if (given(f.epochs)) {
    c.train.epochs = o.epochs;
    c.train.patience = std::min(c.train.patience, o.epochs);
  }
  if (given(f.folds)) c.folds = o.folds;
  if (given(f.threshold)) c.threshold = o.threshold;
  if (given(f.min_precision)) c.triage.min_precision = o.min_precision;
  if (given(f.min_inverse_precision)) c.triage.min_inverse_precision = o.min_inverse_precision;
  if (given(f.step)) c.triage.step = o.step;
  c.generator.seed = c.seed;
  c.train.seed = c.seed;
  try {
    normalize_model_id(c.model);
    validate_config(c.train);
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
  if (c.folds < 2) throw UsageError("folds must be at least 2");
  for (const auto& [name, v] : {std::pair{"min-precision", c.triage.min_precision},
                                {"min-inverse-precision", c.triage.min_inverse_precision},
                                {"threshold", c.threshold}})
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError(std::string(name) + " must lie in [0, 1]");
  if (!(c.triage.step > 0.0 && c.triage.step <= 1.0)) throw UsageError("step must lie in (0, 1]");
  if (c.triage.bins == 0) throw UsageError("bins must be positive");
  return c;
}

void print_dataset_summary(const Dataset& d, std::ostream& out) {
  out << "combo " << combo_string(d.combo) << " (" << d.channels() << " channels)\n";
  char line[96];
  std::snprintf(line, sizeof line, "%-24s %8zu\n", "Images with Objects", d.positives());
  out << line;
  std::snprintf(line, sizeof line, "%-24s %8zu\n", "Images without Objects", d.negatives());
  out << line;
  std::snprintf(line, sizeof line, "%-24s %8zu\n", "Total", d.samples.size());
  out << line;
}

int cmd_gen(const Options& o, const Flags& f, std::ostream& out) {
  const RunConfig c = resolve(o, f);
  ensure_writable_dir(o.out);
  Dataset d;
  try {
    d = generate_dataset(c.generator);
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
  if (!o.stats_from.empty()) {
    require_path(o.stats_from, "--stats-from");
    const Json m = Json::parse(read_text_file(o.stats_from / "manifest.json"));
    if (m.value("standardization", Json()).is_null())
      throw UsageError("--stats-from dataset carries no standardization statistics");
    apply_standardization(d, {m["standardization"]["mean"].get<double>(), m["standardization"]["std"].get<double>()});
  } else {
    standardize(d);
  }
  write_dataset(d, o.out);
  print_dataset_summary(d, out);
  out << "wrote " << o.out.string() << "\n";
  return kExitOk;
}

int cmd_train(const Options& o, const Flags& f, std::ostream& out, std::ostream& err) {
  const RunConfig c = resolve(o, f);
  require_path(o.data, "--data");
  ensure_writable_dir(o.out);
  const Dataset d = read_dataset(o.data);
  if (given(f.train_combo) && c.generator.combo != d.combo)
    throw UsageError("--combo " + combo_string(c.generator.combo) + " does not match dataset combo " +
                     combo_string(d.combo));
  ModelSpec spec;
  try {
    spec = spec_for(c, d.channels());
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
  std::string log;
  const auto on_epoch = [&](const EpochRecord& r) {
    log += epoch_to_json(r).dump() + "\n";
    err << "  epoch " << r.epoch << " lr " << fmt("%.0e", r.lr) << " train " << fmt("%.4f", r.train_loss) << " val "
        << fmt("%.4f", r.val_loss) << "\n";
  };
  const auto on_fold = [&](std::size_t fold, const FoldResult& r) {
    const std::string stem = "fold" + std::to_string(fold + 1);
    ModelFileExtras extras;
    extras.metadata = Json{{"fold", fold + 1},
                           {"folds", c.folds},
                           {"best_epoch", r.history.best_epoch},
                           {"epochs_run", r.history.epochs.size()},
                           {"train_auc", r.train_auc ? json_number(*r.train_auc) : Json(nullptr)},
                           {"train_samples", r.train_indices.size()},
                           {"validation_samples", r.val_indices.size()},
                           {"combo", d.combo},
                           {"seed", c.seed}};
    save_model(r.model, o.out / (stem + ".mdl"), extras);
    write_text_file(o.out / (stem + ".log.ndjson"), log);
    log.clear();
    const auto& m = r.report.metrics;
    out << stem << ": best epoch " << r.history.best_epoch << ", val auc "
        << (r.report.roc ? fmt("%.4f", r.report.roc->auc) : "n/a") << ", f1 " << (m.f1 ? fmt("%.4f", *m.f1) : "n/a")
        << "\n";
  };
  const auto cv = cross_validate(d, d.all_indices(), spec, c.train, c.folds, on_epoch, on_fold);

  Json folds = Json::array();
  for (std::size_t i = 0; i < cv.folds.size(); ++i) {
    Json r = report_to_json(cv.folds[i].report, false);
    r["fold"] = i + 1;
    r["best_epoch"] = cv.folds[i].history.best_epoch;
    r["epochs_run"] = cv.folds[i].history.epochs.size();
    folds.push_back(std::move(r));
  }
  const Json report{{"spec", spec_to_json(spec)},
                    {"config", run_config_to_json(c)},
                    {"dataset", {{"samples", d.samples.size()}, {"objects", d.positives()}, {"combo", d.combo}}},
                    {"folds", std::move(folds)},
                    {"summary", cv.summary}};
  write_text_file(o.out / "cv_report.json", canonical_dump(report));
  write_text_file(o.out / "run_config.json", canonical_dump(run_config_to_json(c)));
  out << "metric              mean +- std\n";
  for (const char* name : {"accuracy", "recall", "precision", "inverse_precision", "f1", "auc"}) {
    const auto& e = cv.summary[name];
    char line[96];
    if (e["mean"].is_null()) std::snprintf(line, sizeof line, "%-18s  undefined\n", name);
    else
      std::snprintf(line, sizeof line, "%-18s  %.4f +- %.4f\n", name, e["mean"].get<double>(),
                    e["std"].is_null() ? 0.0 : e["std"].get<double>());
    out << line;
  }
  return kExitOk;
}

int cmd_eval(const Options& o, const Flags& f, std::ostream& out) {
  const RunConfig c = resolve(o, f);
  require_path(o.models, "--models");
  require_path(o.data, "--data");
  ensure_writable_dir(o.out);
  std::vector<ModelFileExtras> extras;
  const auto models = load_models(o.models, &extras);
  const Dataset d = read_dataset(o.data);
  for (const auto& m : models)
    if (m.spec.input_channels != d.channels())
      throw Error("channel mismatch: model expects " + std::to_string(m.spec.input_channels) +
                  " input channels, found " + std::to_string(d.channels()) + " in dataset " + o.data.string());
  const auto idx = d.all_indices();
  const auto labels = d.labels(idx);
  const auto ens = ensemble_predict(models, d.batch(idx), c.threshold);
  EvalReport report = make_report(ens.votes, ens.mean_scores, labels, c.threshold, models.size());

  std::vector<double> train_aucs;
  for (const auto& e : extras)
    if (e.metadata.contains("train_auc") && e.metadata["train_auc"].is_number())
      train_aucs.push_back(e.metadata["train_auc"].get<double>());
  if (!train_aucs.empty() && train_aucs.size() == models.size()) {
    double sum = 0.0;
    for (double a : train_aucs) sum += a;
    report.train_auc = sum / static_cast<double>(train_aucs.size());
    if (report.roc) report.delta_auc = generalization_gap(*report.train_auc, report.roc->auc);
  }
  Json doc = report_to_json(report, false);
  Json per_model = Json::array();
  for (const auto& s : ens.model_scores) {
    bool both = std::count(labels.begin(), labels.end(), 1) > 0 && std::count(labels.begin(), labels.end(), 0) > 0;
    per_model.push_back(both ? json_number(roc_auc(s, labels).auc) : Json(nullptr));
  }
  doc["model_auc"] = per_model;
  doc["dataset"] = o.data.filename().string();
  write_text_file(o.out / "report.json", canonical_dump(doc));
  if (report.roc) write_text_file(o.out / "roc.csv", roc_csv(*report.roc));
  std::vector<ScoreRow> rows;
  for (std::size_t i = 0; i < idx.size(); ++i) rows.push_back({d.samples[i].id, labels[i], ens.mean_scores[i]});
  write_text_file(o.out / "scores.csv", scores_csv(rows));

  const auto& m = report.metrics;
  auto show = [](const std::optional<double>& v) { return v ? fmt("%.4f", *v) : std::string("undefined"); };
  out << "ensemble of " << models.size() << " models on " << idx.size() << " samples (threshold "
      << fmt("%g", c.threshold) << ")\n";
  out << "accuracy " << show(m.accuracy) << "  recall " << show(m.recall) << "  precision " << show(m.precision)
      << "  inverse_precision " << show(m.inverse_precision) << "  f1 " << show(m.f1) << "\n";
  out << "auc " << (report.roc ? fmt("%.4f", report.roc->auc) : "undefined") << "  train_auc "
      << show(report.train_auc) << "  delta_auc " << show(report.delta_auc) << "\n";
  return kExitOk;
}

int cmd_triage(const Options& o, const Flags& f, std::ostream& out) {
  const RunConfig c = resolve(o, f);
  require_path(o.scores, "--scores");
  ensure_writable_dir(o.out);
  const auto rows = read_scores_csv(o.scores);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& r : rows) {
    scores.push_back(r.score);
    labels.push_back(r.label);
  }
  std::vector<TriageRow> table;
  try {
    table = grid_search(scores, labels, c.triage.step);
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
  write_text_file(o.out / "table.csv", table_csv(table));
  write_text_file(o.out / "histogram.csv", histogram_csv(score_histogram(scores, labels, c.triage.bins)));
  write_text_file(o.out / "curves.csv", curves_csv(threshold_curves(scores, labels, c.triage.step)));
  const auto op = select_operating_point(table, c.triage.min_precision, c.triage.min_inverse_precision);
  const Json constraints{{"min_precision", c.triage.min_precision},
                         {"min_inverse_precision", c.triage.min_inverse_precision},
                         {"step", c.triage.step}};
  if (!op.feasible()) {
    write_text_file(o.out / "policy.json",
                    canonical_dump(Json{{"feasible", false}, {"policy", nullptr}, {"constraints", constraints}}));
    throw InfeasibleError("no feasible policy: no threshold pair reaches precision >= " +
                          fmt("%g", c.triage.min_precision) + " and inverse precision >= " +
                          fmt("%g", c.triage.min_inverse_precision));
  }
  const auto stats = triage_stats(scores, labels, op.row->policy);
  write_text_file(o.out / "policy.json", canonical_dump(Json{{"feasible", true},
                                                             {"policy", policy_to_json(op.row->policy)},
                                                             {"constraints", constraints},
                                                             {"stats", stats_to_json(stats)}}));
  out << "policy pos " << fmt("%.2f", op.row->policy.positive_threshold) << " neg "
      << fmt("%.2f", op.row->policy.negative_threshold) << "\n";
  out << "precision " << (stats.precision ? fmt("%.4f", *stats.precision) : "undefined") << "  inverse_precision "
      << (stats.inverse_precision ? fmt("%.4f", *stats.inverse_precision) : "undefined") << "\n";
  out << "remaining_ratio " << fmt("%.4f", stats.remaining_ratio) << " (" << stats.human_review << " of "
      << stats.total << " for human review)\n";
  return kExitOk;
}

httplib::Server* g_server = nullptr;

extern "C" void stop_server(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const Options& o, const Flags& f, std::ostream& out) {
  const RunConfig c = resolve(o, f);
  require_path(o.models, "--models");
  require_path(o.data, "--data");
  TriagePolicy policy;
  if (!o.policy.empty()) {
    require_path(o.policy, "--policy");
    const Json p = Json::parse(read_text_file(o.policy));
    if (!p.contains("policy") || p["policy"].is_null()) throw UsageError("policy file holds no feasible policy");
    policy = {p["policy"]["positive_threshold"].get<double>(), p["policy"]["negative_threshold"].get<double>()};
  } else if (given(f.pos) && given(f.neg)) {
    policy = {o.pos, o.neg};
  } else {
    throw UsageError("serve needs --policy or both --pos and --neg");
  }
  try {
    validate_policy(policy);
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
  (void)c;
  const auto models = load_models(o.models);
  Dataset d = read_dataset(o.data);
  auto scores = ensemble_scores(models, d);
  fs::path log = o.log;
  if (log.empty()) {
    ensure_writable_dir(o.out.empty() ? fs::path("review") : o.out);
    log = (o.out.empty() ? fs::path("review") : o.out) / "verdicts.ndjson";
  }
  ReviewService service(std::move(d), std::move(scores), policy, log);
  httplib::Server server;
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  mount_review_api(server, service);
  if (!o.ui.empty() && !server.set_mount_point("/", o.ui.string()))
    throw UsageError("--ui directory not found: " + o.ui.string());
  if (!server.bind_to_port(o.host, o.port)) throw Error("cannot bind " + o.host + ":" + std::to_string(o.port));
  const auto st = service.stats();
  out << "serving " << st["total"] << " samples, " << st["pending"] << " pending review, on http://" << o.host << ":"
      << o.port << "\n"
      << std::flush;
  g_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  server.listen_after_bind();
  g_server = nullptr;
  return kExitOk;
}

}  // namespace

std::string scores_csv(const std::vector<ScoreRow>& rows) {
  std::string out = "id,label,score\n";
  char buf[48];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%d,%.17g\n", r.label, r.score);
    out += r.id + buf;
  }
  return out;
}

std::vector<ScoreRow> read_scores_csv(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "id,label,score")
    throw FormatError(path.string() + ": expected header 'id,label,score'");
  std::vector<ScoreRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto a = line.find(','), b = line.rfind(',');
    if (a == std::string::npos || a == b) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    ScoreRow r;
    r.id = line.substr(0, a);
    const std::string label = line.substr(a + 1, b - a - 1), score = line.substr(b + 1);
    if (label != "0" && label != "1") throw FormatError(path.string() + ":" + std::to_string(lineno) + ": label must be 0 or 1");
    r.label = label == "1";
    std::size_t used = 0;
    try {
      r.score = std::stod(score, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != score.size() || !(r.score >= 0.0 && r.score <= 1.0))
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": score must be a number in [0, 1]");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<fs::path> model_files(const fs::path& dir) {
  std::vector<std::pair<unsigned long, fs::path>> found;
  if (!fs::is_directory(dir)) return {};
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() < 9 || name.rfind("fold", 0) != 0 || e.path().extension() != ".mdl") continue;
    const std::string num = name.substr(4, name.size() - 8);
    if (num.empty() || num.find_first_not_of("0123456789") != std::string::npos) continue;
    found.emplace_back(std::stoul(num), e.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& [k, p] : found) out.push_back(std::move(p));
  return out;
}

std::vector<double> ensemble_scores(const std::vector<Model<float>>& models, const Dataset& dataset) {
  if (models.empty()) throw ArgumentError("ensemble_scores: no models");
  for (const auto& m : models)
    if (m.spec.input_channels != dataset.channels())
      throw ArgumentError("channel mismatch: model expects " + std::to_string(m.spec.input_channels) +
                          " input channels, found " + std::to_string(dataset.channels()));
  return ensemble_predict(models, dataset.batch(dataset.all_indices())).mean_scores;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-depth stacked-image vetting: synthesize, train, evaluate, triage and review.", "stackvet"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run config (defaults < config < flags)");
    f.seeds.push_back(sub->add_option("--seed", o.seed, "Random seed for generation, folds, init and shuffling"));
    sub->add_option("--out", o.out, "Output directory");
  };

  auto* gen = app.add_subcommand("gen", "Generate a synthetic multi-depth dataset");
  common(gen);
  f.combo = gen->add_option("--combo", o.combo, "Stack depths, e.g. 32,4 (subset of 32,16,8,4)");
  f.samples = gen->add_option("--samples", o.samples, "Number of source samples");
  f.positive_fraction = gen->add_option("--positive-fraction", o.positive_fraction, "Fraction of object samples");
  f.augment = gen->add_flag("--augment", o.augment, "Expand every sample sixfold with rotations and flips");
  f.permute = gen->add_flag("--permute-channels", o.permute, "Randomly permute channel order per sample");
  gen->add_option("--stats-from", o.stats_from, "Standardize with the statistics of this existing dataset");

  auto* train = app.add_subcommand("train", "Cross-validated training; writes fold models, logs and a report");
  common(train);
  train->add_option("--data", o.data, "Dataset directory");
  f.train_combo = train->add_option("--combo", o.combo, "Expected dataset combo (checked)");
  f.model = train->add_option("--model", o.model, "Architecture: cnn1..cnn6");
  f.cbam = train->add_option("--cbam", o.cbam, "Attention blocks on or off")->check(CLI::IsMember({"on", "off"}));
  f.epochs = train->add_option("--epochs", o.epochs, "Maximum epochs (early stopping may end sooner)");
  f.folds = train->add_option("--folds", o.folds, "Cross-validation folds");

  auto* eval = app.add_subcommand("eval", "Evaluate the fold-model ensemble on a dataset");
  common(eval);
  eval->add_option("--models", o.models, "Directory holding fold*.mdl files");
  eval->add_option("--data", o.data, "Dataset directory");
  f.threshold = eval->add_option("--threshold", o.threshold, "Decision threshold for each model's vote");

  auto* tri = app.add_subcommand("triage", "Grid-search dual thresholds and pick the operating point");
  common(tri);
  tri->add_option("--scores", o.scores, "scores.csv written by eval (id,label,score)");
  f.min_precision = tri->add_option("--min-precision", o.min_precision, "Required precision of auto-positives");
  f.min_inverse_precision =
      tri->add_option("--min-inverse-precision", o.min_inverse_precision, "Required inverse precision of auto-negatives");
  f.step = tri->add_option("--step", o.step, "Threshold lattice step");

  auto* serve = app.add_subcommand("serve", "Serve the human review API for between-threshold samples");
  common(serve);
  serve->add_option("--models", o.models, "Directory holding fold*.mdl files");
  serve->add_option("--data", o.data, "Dataset directory");
  serve->add_option("--policy", o.policy, "policy.json written by triage");
  f.pos = serve->add_option("--pos", o.pos, "Positive threshold (instead of --policy)");
  f.neg = serve->add_option("--neg", o.neg, "Negative threshold (instead of --policy)");
  serve->add_option("--port", o.port, "TCP port");
  serve->add_option("--host", o.host, "Bind address");
  serve->add_option("--log", o.log, "Verdict log path (default <out>/verdicts.ndjson)");
  serve->add_option("--ui", o.ui, "Directory of static UI files to serve at /");

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    if (const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front())
      err << "run 'stackvet " << sub->get_name() << " --help' for usage\n";
    else err << "run 'stackvet --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(o, f, out);
    if (train->parsed()) return cmd_train(o, f, out, err);
    if (eval->parsed()) return cmd_eval(o, f, out);
    if (tri->parsed()) return cmd_triage(o, f, out);
    if (serve->parsed()) return cmd_serve(o, f, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InfeasibleError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace stackvet
