// Copyright 2026 The TapKit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tapkit/cli.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tapkit/consistency.h"
#include "tapkit/corpus.h"
#include "tapkit/errors.h"
#include "tapkit/evaluation.h"
#include "tapkit/log.h"
#include "tapkit/model.h"
#include "tapkit/plot.h"
#include "tapkit/server.h"
#include "tapkit/signifiers.h"
#include "tapkit/synthetic.h"

namespace tapkit {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Flags {
  std::string corpus, embeddings, vocab, checkpoint, out, ratings, calibration;
  std::string screen, screenshot, hierarchy, input, kind = "heatmap", host = "127.0.0.1";
  std::uint64_t seed = 1;
  std::uint64_t synth_seed = 7;
  std::size_t steps = ModelConfig{}.steps;
  std::size_t batch = ModelConfig{}.batch_size;
  double lr = ModelConfig{}.learning_rate;
  std::optional<double> threshold;
  int port = 8080;
  std::size_t k_folds = 10;
  std::size_t screens = 10;
  double disagreement = 0.0;
  bool consistency = false;
  std::size_t raters = 5;
  bool no_upsample = false;
  bool as_json = false;
};

TypeVocabulary Vocab(const Flags& f) {
  return f.vocab.empty() ? TypeVocabulary::Default() : TypeVocabulary::Load(f.vocab);
}

ModelConfig ConfigFrom(const Flags& f, const TypeVocabulary& types) {
  ModelConfig c;
  c.steps = f.steps;
  c.batch_size = f.batch;
  c.learning_rate = f.lr;
  c.seed = f.seed;
  c.type_vocab_size = types.size();
  c.Validate();
  return c;
}

void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream o(path, std::ios::binary);
  if (!o) throw DataError("cannot write " + path.string());
  o << text;
}

json ReadJson(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string Pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
  return buf;
}

int Synth(const Flags& f, std::ostream& out) {
  Corpus corpus = f.consistency ? GenerateConsistencySynthetic({.seed = f.synth_seed, .n_screens = f.screens, .raters = f.raters})
                                : GenerateSynthetic({.seed = f.synth_seed, .n_screens = f.screens, .disagreement_rate = f.disagreement});
  SaveCorpus(corpus, f.out);
  SyntheticEmbeddings(f.synth_seed).Save(fs::path(f.out) / "embeddings.txt");
  out << "wrote " << corpus.screens.size() << " screens, " << corpus.examples.size() << " examples and "
      << (fs::path(f.out) / "embeddings.txt").string() << "\n";
  return kExitOk;
}

int Train(const Flags& f, std::ostream& out) {
  const Corpus corpus = LoadCorpus(f.corpus);
  const auto embeddings = EmbeddingTable::Load(f.embeddings);
  const auto types = Vocab(f);
  const ModelConfig config = ConfigFrom(f, types);
  std::optional<Corpus> calibration;
  if (!f.calibration.empty()) calibration = LoadCorpus(f.calibration);
  TrainOptions options;
  options.on_report = [&out](const TrainProgress& p) {
    out << "step " << p.step << " loss " << std::fixed << std::setprecision(5) << p.running_loss << "\n";
    out.unsetf(std::ios::fixed);
    return true;
  };
  Model model = TrainModel(corpus, config, embeddings, types, calibration ? &*calibration : nullptr, options);
  if (f.threshold) model.threshold = *f.threshold;
  SaveCheckpoint(model, f.out);
  out << "saved " << f.out << " (version " << model.Version() << ", threshold " << model.threshold << ")\n";
  return kExitOk;
}

void PrintReportRow(std::ostream& out, const std::string& name, const CrossValidationSummary& s) {
  auto cell = [](const MetricSummary& m) { return Pct(m.mean) + " (SD " + Pct(m.sd) + ")"; };
  out << std::left << std::setw(10) << name << " tappable P " << cell(s.precision) << "  R " << cell(s.recall)
      << " | not tappable P " << cell(s.not_tappable_precision) << "  R " << cell(s.not_tappable_recall) << "\n";
}

int Eval(const Flags& f, std::ostream& out) {
  const Corpus corpus = LoadCorpus(f.corpus);
  const auto embeddings = EmbeddingTable::Load(f.embeddings);
  const auto types = Vocab(f);
  CrossValidationOptions options;
  options.k = f.k_folds;
  options.seed = f.seed;
  options.upsample = !f.no_upsample;
  const auto cv = CrossValidate(corpus, ConfigFrom(f, types), embeddings, types, options);
  for (const auto& r : cv.folds) {
    out << "fold " << r.fold << ": n " << r.n << "  threshold " << r.threshold << "  P " << Pct(r.tappable.precision)
        << "  R " << Pct(r.tappable.recall) << "  AUC " << (r.curve ? r.curve->auc : 0.0) << "\n";
  }
  PrintReportRow(out, "model", cv.summary);
  PrintReportRow(out, "clickable", cv.baseline);
  if (!f.out.empty()) WriteText(f.out, cv.ToJson().dump(2) + "\n");
  return kExitOk;
}

int Predict(const Flags& f, std::ostream& out) {
  const auto embeddings = EmbeddingTable::Load(f.embeddings);
  const Model model = LoadCheckpoint(f.checkpoint, &embeddings);
  ScreenRecord screen;
  if (!f.corpus.empty()) {
    if (f.screen.empty()) throw ContractViolation("--screen is required with --corpus");
    screen = LoadCorpus(f.corpus).screen(f.screen);
  } else if (!f.screenshot.empty() && !f.hierarchy.empty()) {
    screen = MakeScreen(fs::path(f.screenshot).stem().string(), ReadPng(f.screenshot), ReadHierarchy(f.hierarchy).root);
  } else {
    throw ContractViolation("give --corpus with --screen, or --screenshot with --hierarchy");
  }
  if (screen.screenshot.width > screen.screenshot.height) throw DataError("landscape screenshot");
  const double threshold = f.threshold.value_or(model.threshold);
  const auto r = AnalyzeScreen(model, embeddings, screen, threshold);
  if (f.as_json) {
    out << r.ToJson().dump(2) << "\n";
    return kExitOk;
  }
  out << std::left << std::setw(16) << "element" << std::setw(10) << "clickable" << std::setw(12) << "probability"
      << std::setw(11) << "perceived" << "mismatch\n";
  for (const auto& e : r.elements) {
    out << std::left << std::setw(16) << e.element_id << std::setw(10) << (e.clickable ? "yes" : "no") << std::setw(12)
        << std::fixed << std::setprecision(4) << e.probability << std::setw(11) << (e.perceived_tappable ? "yes" : "no")
        << (e.mismatch ? "MISMATCH" : "") << "\n";
  }
  out.unsetf(std::ios::fixed);
  out << r.elements.size() << " elements, threshold " << threshold << "\n";
  return kExitOk;
}

json KeywordJson(const std::vector<Keyword>& kw) {
  json a = json::array();
  for (const auto& k : kw) a.push_back({{"term", k.term}, {"score", k.score}});
  return a;
}

json PaletteOrNull(const Corpus& corpus, Polarity p, std::uint64_t seed) {
  try {
    return DominantColors(corpus, p, 10, seed).ToJson();
  } catch (const DataError& e) {
    logger().warn("{}", e.what());
    return nullptr;
  }
}

int Analyze(const Flags& f, std::ostream& out) {
  const Corpus corpus = LoadCorpus(f.corpus);
  const auto types = Vocab(f);
  json report;
  json acc = json::array();
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  for (const auto& row : AccuracyByType(corpus, types)) {
    acc.push_back({{"type", row.type},
                   {"tappable", {{"accuracy", opt(row.tappable.accuracy())}, {"n", row.tappable.total}}},
                   {"not_tappable", {{"accuracy", opt(row.not_tappable.accuracy())}, {"n", row.not_tappable.total}}}});
  }
  report["accuracy_by_type"] = acc;
  report["size"] = ComputeSizeStats(corpus, types).ToJson();
  report["word_counts"] = ComputeWordCountStats(corpus).ToJson();
  const auto docs = DocumentsByLabel(corpus);
  if (!docs.tappable.empty() && !docs.not_tappable.empty()) {
    const auto kw = TfIdfKeywords(docs.tappable, docs.not_tappable);
    report["keywords"] = {{"tappable", KeywordJson(kw.a)}, {"not_tappable", KeywordJson(kw.b)}};
  } else {
    report["keywords"] = nullptr;
  }
  report["palettes"] = {{"tappable", PaletteOrNull(corpus, Polarity::kTappable, f.seed)},
                        {"not_tappable", PaletteOrNull(corpus, Polarity::kNotTappable, f.seed)}};

  for (const auto& row : acc) {
    out << std::left << std::setw(14) << row["type"].get<std::string>() << " tappable acc "
        << (row["tappable"]["accuracy"].is_null() ? "-" : Pct(row["tappable"]["accuracy"])) << " (n "
        << row["tappable"]["n"] << ")  not tappable acc "
        << (row["not_tappable"]["accuracy"].is_null() ? "-" : Pct(row["not_tappable"]["accuracy"])) << " (n "
        << row["not_tappable"]["n"] << ")\n";
  }
  if (f.out.empty()) {
    out << report.dump(2) << "\n";
    return kExitOk;
  }
  const fs::path dir(f.out);
  WriteText(dir / "signifiers.json", report.dump(2) + "\n");
  for (const Polarity p : {Polarity::kTappable, Polarity::kNotTappable}) {
    WriteText(dir / (std::string("heatmap_") + PolarityName(p) + ".json"), LocationHeatmap(corpus, p).ToJson().dump() + "\n");
    if (!report["palettes"][PolarityName(p)].is_null()) {
      WriteText(dir / (std::string("palette_") + PolarityName(p) + ".json"),
                report["palettes"][PolarityName(p)].dump(2) + "\n");
    }
  }
  out << "wrote " << dir.string() << "/signifiers.json, heatmap_*.json, palette_*.json\n";
  return kExitOk;
}

int Agreement(const Flags& f, std::ostream& out) {
  Corpus corpus = LoadCorpus(f.corpus);
  if (!f.ratings.empty()) {
    corpus.examples = ReadRatingsFile(f.ratings);
    corpus.Validate();
  }
  const auto types = Vocab(f);
  const auto agreement = ComputeAgreement(corpus, types);
  const auto kappa = FleissKappa(CountMatrix(GroupRatings(corpus.examples)));
  json report{{"agreement", agreement.ToJson()}, {"kappa", kappa.ToJson()}};
  out << "agreement " << std::fixed << std::setprecision(2) << agreement.overall_percent << "% over "
      << agreement.elements.size() << " elements\n";
  if (kappa.defined) {
    out << "fleiss kappa " << std::setprecision(3) << kappa.kappa << " (P " << kappa.p_bar << ", Pe " << kappa.p_e << ")\n";
  } else {
    out << "fleiss kappa undefined (a single category was used)\n";
  }
  if (!f.checkpoint.empty()) {
    if (f.embeddings.empty()) throw ContractViolation("--embeddings is required with --checkpoint");
    const auto embeddings = EmbeddingTable::Load(f.embeddings);
    const Model model = LoadCheckpoint(f.checkpoint, &embeddings);
    const auto bins = ConsistencyBins(corpus, model, embeddings);
    report["bins"] = bins.ToJson();
    for (const auto& b : bins.bins) {
      out << std::left << std::setw(18) << b.label << " n " << std::setw(5) << b.probabilities.size() << " mean "
          << (b.mean() ? std::to_string(*b.mean()) : std::string("(empty)")) << "\n";
    }
  }
  out.unsetf(std::ios::fixed);
  if (!f.out.empty()) WriteText(f.out, report.dump(2) + "\n");
  return kExitOk;
}

int Serve(const Flags& f, std::ostream& out) {
  AnalysisService service(EmbeddingTable::Load(f.embeddings));
  HttpServer server(service);
  const int port = server.Start(f.host, f.port);
  out << "listening on http://" << f.host << ":" << port << std::endl;
  const auto embeddings = EmbeddingTable::Load(f.embeddings);
  Model model = LoadCheckpoint(f.checkpoint, &embeddings);
  if (f.threshold) model.threshold = *f.threshold;
  service.SetModel(std::move(model));
  out << "model loaded" << std::endl;
  server.Wait();
  return kExitOk;
}

int Plot(const Flags& f, std::ostream& out) {
  const json input = ReadJson(f.input);
  Image img;
  if (f.kind == "heatmap") {
    img = RenderHeatmap(input);
  } else if (f.kind == "palette") {
    img = RenderPalette(input);
  } else {
    img = RenderBins(input.is_object() && input.contains("bins") ? input["bins"] : input);
  }
  WritePng(f.out, img);
  out << "wrote " << f.out << " (" << img.width << "x" << img.height << ")\n";
  return kExitOk;
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tappability modeling toolkit", "tapkit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  Flags f;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus and matching word vectors");
  synth->add_option("--out", f.out, "Output corpus directory")->required();
  synth->add_option("--seed", f.synth_seed, "Random seed");
  synth->add_option("--screens", f.screens, "Number of screens")->check(CLI::PositiveNumber);
  synth->add_option("--disagreement", f.disagreement, "Fraction of clickable attributes contradicting the label")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_flag("--consistency", f.consistency, "Generate a multi-rater corpus instead");
  synth->add_option("--raters", f.raters, "Raters per element with --consistency")->check(CLI::PositiveNumber);

  auto add_model_flags = [&](CLI::App* c) {
    c->add_option("--seed", f.seed, "Random seed");
    c->add_option("--steps", f.steps, "Training steps")->check(CLI::PositiveNumber);
    c->add_option("--batch", f.batch, "Batch size")->check(CLI::PositiveNumber);
    c->add_option("--lr", f.lr, "Adagrad learning rate")->check(CLI::PositiveNumber);
    c->add_option("--vocab", f.vocab, "Type vocabulary file (default: built-in list)")->check(CLI::ExistingFile);
  };

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  train->add_option("--corpus", f.corpus, "Corpus directory")->required();
  train->add_option("--embeddings", f.embeddings, "Word vector file")->required();
  train->add_option("--out", f.out, "Checkpoint path to write")->required();
  train->add_option("--calibration", f.calibration, "Corpus used to pick the decision threshold");
  train->add_option("--threshold", f.threshold, "Override the stored decision threshold")->check(CLI::Range(0.0, 1.0));
  add_model_flags(train);

  auto* eval = app.add_subcommand("eval", "Cross-validate and compare with the clickable attribute");
  eval->add_option("--corpus", f.corpus, "Corpus directory")->required();
  eval->add_option("--embeddings", f.embeddings, "Word vector file")->required();
  eval->add_option("--k-folds", f.k_folds, "Number of folds")->check(CLI::Range(2, 1000));
  eval->add_flag("--no-upsample", f.no_upsample, "Train on the unbalanced folds");
  eval->add_option("--out", f.out, "Write the full report as JSON here");
  add_model_flags(eval);

  auto* predict = app.add_subcommand("predict", "Score the elements of one screen");
  predict->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
  predict->add_option("--embeddings", f.embeddings, "Word vector file")->required();
  predict->add_option("--corpus", f.corpus, "Corpus directory holding the screen");
  predict->add_option("--screen", f.screen, "Screen id within --corpus");
  predict->add_option("--screenshot", f.screenshot, "PNG screenshot")->check(CLI::ExistingFile);
  predict->add_option("--hierarchy", f.hierarchy, "JSON view hierarchy")->check(CLI::ExistingFile);
  predict->add_option("--threshold", f.threshold, "Decision threshold (default: the checkpoint's)")
      ->check(CLI::Range(0.0, 1.0));
  predict->add_flag("--json", f.as_json, "Print the analysis as JSON");

  auto* analyze = app.add_subcommand("analyze", "Signifier statistics of a labeled corpus");
  analyze->add_option("--corpus", f.corpus, "Corpus directory")->required();
  analyze->add_option("--vocab", f.vocab, "Type vocabulary file (default: built-in list)")->check(CLI::ExistingFile);
  analyze->add_option("--seed", f.seed, "Seed for pixel sampling and clustering");
  analyze->add_option("--out", f.out, "Output directory (default: print JSON)");

  auto* agreement = app.add_subcommand("agreement", "Rater agreement, Fleiss' kappa and model-vs-agreement bins");
  agreement->add_option("--corpus", f.corpus, "Multi-rater corpus directory")->required();
  agreement->add_option("--ratings", f.ratings, "Rating file replacing the corpus examples")->check(CLI::ExistingFile);
  agreement->add_option("--checkpoint", f.checkpoint, "Checkpoint for the agreement bins");
  agreement->add_option("--embeddings", f.embeddings, "Word vector file (with --checkpoint)");
  agreement->add_option("--vocab", f.vocab, "Type vocabulary file (default: built-in list)")->check(CLI::ExistingFile);
  agreement->add_option("--out", f.out, "Write the report as JSON here");

  auto* serve = app.add_subcommand("serve", "Serve /analyze and /health over HTTP");
  serve->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
  serve->add_option("--embeddings", f.embeddings, "Word vector file")->required();
  serve->add_option("--port", f.port, "TCP port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--host", f.host, "Address to bind");
  serve->add_option("--threshold", f.threshold, "Default threshold (default: the checkpoint's)")
      ->check(CLI::Range(0.0, 1.0));

  auto* plot = app.add_subcommand("plot", "Render a heatmap, palette or bin table to PNG");
  plot->add_option("--kind", f.kind, "heatmap | palette | bins")->check(CLI::IsMember({"heatmap", "palette", "bins"}));
  plot->add_option("--input", f.input, "JSON table written by analyze or agreement")->required();
  plot->add_option("--out", f.out, "PNG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return Synth(f, out);
    if (*train) return Train(f, out);
    if (*eval) return Eval(f, out);
    if (*predict) return Predict(f, out);
    if (*analyze) return Analyze(f, out);
    if (*agreement) return Agreement(f, out);
    if (*serve) return Serve(f, out);
    if (*plot) return Plot(f, out);
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace tapkit
