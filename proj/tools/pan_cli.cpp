// Command line front end: synthetic data generation, training, evaluation,
// PA map extraction, throughput benchmarking, gradient checking and VAP
// weight inspection.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pan/bench.hpp"
#include "pan/gemm.hpp"
#include "pan/gradcheck_suite.hpp"
#include "pan/io.hpp"
#include "pan/model.hpp"

namespace {

using pan::ModelConfig;
using pan::ParamSet;
using pan::TensorF;
using json = nlohmann::json;

std::size_t env_workers() {
  const char* v = std::getenv("PAN_WORKERS");
  if (!v) return 1;
  const long n = std::strtol(v, nullptr, 10);
  return n > 1 ? static_cast<std::size_t>(n) : 1;
}

std::vector<std::size_t> parse_channels(const std::string& csv) {
  std::vector<std::size_t> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(static_cast<std::size_t>(std::stoul(tok)));
  if (out.empty()) throw CLI::ValidationError("--backbone", "expected a comma-separated channel list");
  return out;
}

ParamSet<float> subset(const ParamSet<float>& params, const std::string& prefix) {
  ParamSet<float> out;
  for (const auto& p : params.items) {
    if (p.name.rfind(prefix, 0) == 0) out.add(p.name.substr(prefix.size()), p.value);
  }
  return out;
}

// Model configuration embedded in the checkpoint as a small f32 tensor so
// that eval/extract/viz need no flag replay. Values are small exact ints.
void write_meta(ParamSet<float>& params, const ModelConfig& cfg) {
  TensorF meta({11});
  meta[0] = static_cast<float>(static_cast<int>(cfg.kind));
  meta[1] = static_cast<float>(cfg.sampler.segments);
  meta[2] = static_cast<float>(cfg.sampler.stack_len);
  meta[3] = static_cast<float>(cfg.pa.depth);
  meta[4] = static_cast<float>(cfg.pa.channels);
  meta[5] = static_cast<float>(cfg.pa.kernel);
  meta[6] = static_cast<float>(static_cast<int>(cfg.pa.encoding));
  meta[7] = static_cast<float>(static_cast<int>(cfg.pool));
  meta[8] = static_cast<float>(cfg.classes);
  meta[9] = cfg.zero_pa ? 1.0f : 0.0f;
  meta[10] = cfg.standardize_input ? 1.0f : 0.0f;
  params.add("meta.cfg", std::move(meta));
}

ModelConfig read_meta(const ParamSet<float>& params) {
  ModelConfig cfg;
  if (params.has("meta.cfg")) {
    const TensorF& m = params.at("meta.cfg").value;
    cfg.kind = static_cast<pan::BranchKind>(static_cast<int>(m[0]));
    cfg.sampler.segments = static_cast<std::size_t>(m[1]);
    cfg.sampler.stack_len = static_cast<std::size_t>(m[2]);
    cfg.pa.depth = static_cast<std::size_t>(m[3]);
    cfg.pa.channels = static_cast<std::size_t>(m[4]);
    cfg.pa.kernel = static_cast<std::size_t>(m[5]);
    cfg.pa.encoding = static_cast<pan::Encoding>(static_cast<int>(m[6]));
    cfg.pool = static_cast<pan::TemporalPool>(static_cast<int>(m[7]));
    cfg.classes = static_cast<std::size_t>(m[8]);
    cfg.zero_pa = m[9] != 0.0f;
    if (m.size() > 10) cfg.standardize_input = m[10] != 0.0f;
  } else {
    // Checkpoint from another writer: reconstruct what the shapes pin down
    // and fall back to defaults (VAP pooling, e1) for the rest.
    cfg.classes = params.at("vap.w3").value.dim(0);
    cfg.sampler.segments = params.at("vap.w1").value.dim(1) + 1;
    const std::size_t in_ch = params.at("bb.conv0.w").value.dim(1);
    if (!params.has("pa.conv0.w")) {
      cfg.kind = pan::BranchKind::RgbOnly;
      cfg.pa.depth = 0;
    } else {
      cfg.kind = pan::BranchKind::LiteJoint;
      cfg.sampler.stack_len = in_ch - 2;
      std::size_t depth = 0;
      while (params.has("pa.conv" + std::to_string(depth) + ".w")) ++depth;
      cfg.pa.depth = depth;
      cfg.pa.channels = params.at("pa.conv0.w").value.dim(0);
      cfg.pa.kernel = params.at("pa.conv0.w").value.dim(2);
    }
  }
  std::size_t stages = 0;
  cfg.backbone_channels.clear();
  while (params.has("bb.conv" + std::to_string(stages) + ".w")) {
    cfg.backbone_channels.push_back(params.at("bb.conv" + std::to_string(stages) + ".w").value.dim(0));
    ++stages;
  }
  return cfg;
}

// Per-class deterministic split: the last `holdout` fraction of each class's
// clips (in labels.csv order) is held out.
void split_dataset(const std::vector<pan::ClipData>& all, double holdout,
                   std::vector<pan::ClipData>& train, std::vector<pan::ClipData>& test) {
  int max_label = 0;
  for (const auto& c : all) max_label = std::max(max_label, c.label);
  for (int cls = 0; cls <= max_label; ++cls) {
    std::vector<const pan::ClipData*> of_class;
    for (const auto& c : all) {
      if (c.label == cls) of_class.push_back(&c);
    }
    const std::size_t n_test = static_cast<std::size_t>(static_cast<double>(of_class.size()) * holdout);
    for (std::size_t i = 0; i < of_class.size(); ++i) {
      (i + n_test < of_class.size() ? train : test).push_back(*of_class[i]);
    }
  }
}

// Scores every clip (optionally fanned out over PAN_WORKERS threads, results
// reduced in clip order) and folds them into an EvalResult.
pan::EvalResult evaluate_parallel(const std::vector<pan::ClipData>& clips, std::size_t classes,
                                  const std::function<std::pair<TensorF, TensorF>(const pan::ClipData&)>& scorer,
                                  std::size_t workers) {
  std::vector<std::pair<TensorF, TensorF>> scored(clips.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < clips.size(); ++i) scored[i] = scorer(clips[i]);
  } else {
    std::vector<std::thread> pool;
    const std::size_t w = std::min(workers, clips.size());
    for (std::size_t t = 0; t < w; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < clips.size(); i += w) scored[i] = scorer(clips[i]);
      });
    }
    for (auto& th : pool) th.join();
  }
  return pan::evaluate_clips<float>(clips, classes, [&](const pan::ClipData& c) {
    return scored[static_cast<std::size_t>(&c - clips.data())];
  });
}

void print_eval(const pan::EvalResult& res) {
  std::printf("clips %zu  top1 %.4f\n", res.clips, res.top1);
  std::printf("confusion [true][pred]:\n");
  for (const auto& row : res.confusion) {
    for (std::size_t v : row) std::printf(" %4zu", v);
    std::printf("\n");
  }
  if (!res.mean_w.empty()) {
    std::printf("mean timescale weights:");
    for (double w : res.mean_w) std::printf(" %.4f", w);
    std::printf("\n");
  }
}

struct LoadedModel {
  bool full = false;
  ModelConfig cfg;                  // lite / single branch
  ParamSet<float> params;
  ModelConfig rgb_cfg, pa_cfg;      // full
  ParamSet<float> rgb_params, pa_params;
  std::vector<float> fusion = {0.5f, 0.5f};
};

LoadedModel load_model(const std::string& path) {
  LoadedModel m;
  ParamSet<float> all = pan::io::load_checkpoint(path);
  if (all.has("rgb.bb.conv0.w")) {
    m.full = true;
    m.rgb_params = subset(all, "rgb.");
    m.pa_params = subset(all, "pab.");
    m.rgb_cfg = read_meta(m.rgb_params);
    m.pa_cfg = read_meta(m.pa_params);
    if (all.has("fusion.w")) {
      const TensorF& f = all.at("fusion.w").value;
      m.fusion = {f[0], f[1]};
    }
  } else {
    m.params = std::move(all);
    m.cfg = read_meta(m.params);
  }
  return m;
}

std::pair<TensorF, TensorF> score_clip(const LoadedModel& m, const pan::ClipData& clip) {
  if (!m.full) return pan::clip_scores(clip, m.cfg, m.params);
  auto [s_rgb, w_rgb] = pan::clip_scores(clip, m.rgb_cfg, m.rgb_params);
  auto [s_pa, w_pa] = pan::clip_scores(clip, m.pa_cfg, m.pa_params);
  TensorF s = pan::fuse_scores<float>({s_rgb, s_pa}, m.fusion);
  return {std::move(s), std::move(w_pa)};
}

std::size_t model_classes(const LoadedModel& m) { return m.full ? m.rgb_cfg.classes : m.cfg.classes; }

json metrics_to_json(const std::vector<pan::EpochMetrics>& metrics) {
  json arr = json::array();
  for (const auto& em : metrics) {
    arr.push_back({{"epoch", em.epoch}, {"lr", em.lr}, {"train_loss", em.train_loss},
                   {"train_top1", em.train_top1}});
  }
  return arr;
}

}  // namespace

int main(int argc, char** argv) {
  pan::init_numeric_backend();
  CLI::App app{"persistent appearance toolkit"};
  app.require_subcommand(1);

  // --- synth ---------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate the 4-class moving-square dataset");
  pan::io::SynthSpec spec;
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--clips-per-class", spec.clips_per_class);
  synth->add_option("--frames", spec.frames);
  synth->add_option("--size", spec.size);
  synth->add_option("--square", spec.square);
  synth->add_option("--speed", spec.speed);
  synth->add_option("--noise", spec.noise_sigma);
  synth->add_option("--seed", spec.seed);

  // --- train ---------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train a model on an indexed clip dataset");
  std::string train_data, train_out, variant = "lite", pool = "vap", encoding = "e1";
  std::string backbone_csv = "16,32,64", milestones_csv, metrics_path;
  ModelConfig mcfg;
  pan::TrainConfig tcfg;
  double holdout = 0.0;
  bool zero_pa = false;
  train->add_option("--data", train_data, "dataset directory with labels.csv")->required();
  train->add_option("--out", train_out, "checkpoint output path")->required();
  train->add_option("--variant", variant)->check(CLI::IsMember({"lite", "full", "rgb", "pa"}));
  train->add_option("--pool", pool)->check(CLI::IsMember({"vap", "avg"}));
  train->add_option("--encoding", encoding)->check(CLI::IsMember({"e1", "e2"}));
  train->add_option("--segments", mcfg.sampler.segments);
  train->add_option("--stack", mcfg.sampler.stack_len);
  train->add_option("--pa-depth", mcfg.pa.depth);
  train->add_option("--pa-channels", mcfg.pa.channels);
  train->add_option("--pa-kernel", mcfg.pa.kernel);
  train->add_option("--backbone", backbone_csv, "comma-separated stage channels");
  train->add_option("--epochs", tcfg.epochs);
  train->add_option("--lr", tcfg.lr);
  train->add_option("--batch", tcfg.batch);
  train->add_option("--momentum", tcfg.momentum);
  train->add_option("--weight-decay", tcfg.weight_decay);
  train->add_option("--milestones", milestones_csv, "comma-separated epochs where lr drops 10x");
  train->add_option("--seed", tcfg.seed);
  train->add_option("--holdout", holdout, "per-class fraction held out for a final eval");
  train->add_option("--metrics", metrics_path, "metrics JSON path (default <out>.metrics.json)");
  train->add_flag("--zero-pa", zero_pa, "ablation: zero the PA channels after encoding");
  bool raw_input = false;
  train->add_flag("--raw-input", raw_input, "skip per-channel standardization of the backbone input");

  // --- eval ----------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, ensemble_ckpt;
  double eval_holdout = 0.0;
  eval->add_option("--ckpt", eval_ckpt)->required();
  eval->add_option("--data", eval_data)->required();
  eval->add_option("--ensemble", ensemble_ckpt, "second checkpoint; scores averaged equally");
  eval->add_option("--holdout", eval_holdout, "evaluate only the per-class holdout tail");

  // --- extract -------------------------------------------------------------
  auto* extract = app.add_subcommand("extract", "export PA maps of a clip as grayscale images");
  std::string ex_clip, ex_ckpt, ex_out;
  extract->add_option("--clip", ex_clip, "clip directory")->required();
  extract->add_option("--ckpt", ex_ckpt, "checkpoint with PA weights (omit for raw frame differences)");
  extract->add_option("--out", ex_out, "output directory")->required();

  // --- bench ---------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "motion cue throughput benchmark");
  std::size_t b_size = 224, b_pairs = 8, b_reps = 5, b_threads = env_workers(), b_stack = 4;
  int b_hs_iters = 100;
  std::uint64_t b_seed = 42;
  bool b_json = false, b_encodings = false;
  bench->add_option("--size", b_size);
  bench->add_option("--pairs", b_pairs);
  bench->add_option("--reps", b_reps);
  bench->add_option("--threads", b_threads);
  bench->add_option("--hs-iters", b_hs_iters);
  bench->add_option("--stack", b_stack, "frames per stack for --encodings");
  bench->add_option("--seed", b_seed);
  bench->add_flag("--json", b_json);
  bench->add_flag("--encodings", b_encodings, "also time the e1 vs e2 encoding paths");

  // --- gradcheck -----------------------------------------------------------
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::uint64_t gc_seed = 42;
  gradcheck->add_option("--seed", gc_seed);

  // --- viz -----------------------------------------------------------------
  auto* viz = app.add_subcommand("viz", "dump per-clip timescale weights as JSON");
  std::string viz_ckpt, viz_data, viz_out;
  viz->add_option("--ckpt", viz_ckpt)->required();
  viz->add_option("--data", viz_data)->required();
  viz->add_option("--out", viz_out, "output JSON path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      auto index = pan::io::synth_dataset(spec, synth_out);
      std::printf("wrote %zu clips to %s\n", index.entries.size(), synth_out.c_str());
      return 0;
    }

    if (*train) {
      mcfg.backbone_channels = parse_channels(backbone_csv);
      mcfg.pa.encoding = encoding == "e2" ? pan::Encoding::E2 : pan::Encoding::E1;
      mcfg.pool = pool == "avg" ? pan::TemporalPool::Average : pan::TemporalPool::VAP;
      mcfg.zero_pa = zero_pa;
      mcfg.standardize_input = !raw_input;
      if (!milestones_csv.empty()) tcfg.lr_milestones = parse_channels(milestones_csv);

      auto all = pan::io::load_dataset(train_data);
      std::vector<pan::ClipData> train_clips, test_clips;
      if (holdout > 0.0) {
        split_dataset(all, holdout, train_clips, test_clips);
      } else {
        train_clips = std::move(all);
      }
      int max_label = 0;
      for (const auto& c : train_clips) max_label = std::max(max_label, c.label);
      mcfg.classes = static_cast<std::size_t>(max_label) + 1;

      auto report = [](const pan::EpochMetrics& em) {
        std::printf("epoch %zu  lr %.5f  loss %.4f  top1 %.4f\n", em.epoch, em.lr, em.train_loss,
                    em.train_top1);
        std::fflush(stdout);
        return true;
      };

      json mj;
      ParamSet<float> out_params;
      if (variant == "full") {
        ModelConfig rgb_cfg = mcfg, pa_cfg = mcfg;
        rgb_cfg.kind = pan::BranchKind::RgbOnly;
        pa_cfg.kind = pan::BranchKind::PaOnly;
        auto rgb_params = pan::init_model_params<float>(rgb_cfg, tcfg.seed);
        auto pa_params = pan::init_model_params<float>(pa_cfg, tcfg.seed + 1);
        std::printf("-- rgb branch --\n");
        mj["rgb"] = metrics_to_json(pan::train_model(train_clips, rgb_cfg, tcfg, rgb_params, report));
        std::printf("-- pa branch --\n");
        pan::TrainConfig pa_tcfg = tcfg;
        pa_tcfg.seed = tcfg.seed + 1;
        mj["pa"] = metrics_to_json(pan::train_model(train_clips, pa_cfg, pa_tcfg, pa_params, report));
        write_meta(rgb_params, rgb_cfg);
        write_meta(pa_params, pa_cfg);
        out_params.adopt(std::move(rgb_params), "rgb.");
        out_params.adopt(std::move(pa_params), "pab.");
        out_params.add("fusion.w", TensorF({2}, {0.5f, 0.5f}));
      } else {
        if (variant == "rgb") mcfg.kind = pan::BranchKind::RgbOnly;
        if (variant == "pa") mcfg.kind = pan::BranchKind::PaOnly;
        auto params = pan::init_model_params<float>(mcfg, tcfg.seed);
        mj["train"] = metrics_to_json(pan::train_model(train_clips, mcfg, tcfg, params, report));
        write_meta(params, mcfg);
        out_params = std::move(params);
      }
      pan::io::save_checkpoint(train_out, out_params);
      std::printf("saved %s\n", train_out.c_str());

      if (!test_clips.empty()) {
        LoadedModel m = load_model(train_out);
        auto res = evaluate_parallel(test_clips, model_classes(m),
                                     [&](const pan::ClipData& c) { return score_clip(m, c); },
                                     env_workers());
        std::printf("holdout ");
        print_eval(res);
        mj["holdout_top1"] = res.top1;
      }
      std::ofstream mf(metrics_path.empty() ? train_out + ".metrics.json" : metrics_path);
      mf << mj.dump(2) << "\n";
      return 0;
    }

    if (*eval) {
      LoadedModel m = load_model(eval_ckpt);
      LoadedModel m2;
      if (!ensemble_ckpt.empty()) m2 = load_model(ensemble_ckpt);
      auto clips = pan::io::load_dataset(eval_data);
      if (eval_holdout > 0.0) {
        std::vector<pan::ClipData> train_part, test_part;
        split_dataset(clips, eval_holdout, train_part, test_part);
        clips = std::move(test_part);
      }
      auto scorer = [&](const pan::ClipData& c) -> std::pair<TensorF, TensorF> {
        auto [s, w] = score_clip(m, c);
        if (ensemble_ckpt.empty()) return {std::move(s), std::move(w)};
        auto [s2, w2] = score_clip(m2, c);
        TensorF fused = pan::fuse_scores<float>({pan::softmax(s), pan::softmax(s2)}, {0.5f, 0.5f});
        return {std::move(fused), std::move(w)};
      };
      print_eval(evaluate_parallel(clips, model_classes(m), scorer, env_workers()));
      return 0;
    }

    if (*extract) {
      auto frames = pan::io::load_clip(ex_clip);
      pan::PAConfig cfg;
      ParamSet<float> params;
      if (ex_ckpt.empty()) {
        cfg.depth = 0;
      } else {
        ParamSet<float> all = pan::io::load_checkpoint(ex_ckpt);
        params = all.has("pab.pa.conv0.w") ? subset(all, "pab.") : std::move(all);
        std::size_t depth = 0;
        while (params.has("pa.conv" + std::to_string(depth) + ".w")) ++depth;
        if (depth == 0) throw std::runtime_error("extract: checkpoint has no PA conv weights");
        cfg.depth = depth;
        cfg.channels = params.at("pa.conv0.w").value.dim(0);
        cfg.kernel = params.at("pa.conv0.w").value.dim(2);
      }
      std::filesystem::create_directories(ex_out);
      for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
        TensorF pa = pan::pa_pair(frames[i], frames[i + 1], params, cfg);
        char name[32];
        std::snprintf(name, sizeof name, "pa_%06zu.pgm", i + 1);
        pan::io::export_pa_pgm(pa, ex_out + "/" + name);
      }
      std::printf("wrote %zu PA maps to %s\n", frames.size() - 1, ex_out.c_str());
      return 0;
    }

    if (*bench) {
      auto report = pan::bench::benchmark_throughput(b_size, b_pairs, b_reps, b_threads, b_hs_iters, b_seed);
      if (b_json) {
        std::printf("%s\n", pan::bench::report_to_json(report).c_str());
      } else {
        std::printf("%s", pan::bench::format_report(report).c_str());
      }
      if (b_encodings) {
        auto enc = pan::bench::benchmark_encodings(b_size, b_stack, b_reps, b_seed);
        std::printf("e1: %.3f ms/stack, %.0f flops   e2: %.3f ms/stack, %.0f flops\n", enc.e1_ms_median,
                    enc.e1_flops, enc.e2_ms_median, enc.e2_flops);
      }
      return 0;
    }

    if (*gradcheck) {
      bool ok = true;
      for (const auto& r : pan::run_gradcheck_suite(gc_seed)) {
        std::printf("%-20s max_err %.3e  tol %.0e  %s\n", r.name.c_str(), r.max_err, r.tol,
                    r.pass() ? "ok" : "FAIL");
        ok = ok && r.pass();
      }
      return ok ? 0 : 1;
    }

    if (*viz) {
      LoadedModel m = load_model(viz_ckpt);
      auto clips = pan::io::load_dataset(viz_data);
      json arr = json::array();
      for (const auto& clip : clips) {
        auto [s, w] = score_clip(m, clip);
        const auto pred = static_cast<std::size_t>(
            std::max_element(s.data.begin(), s.data.end()) - s.data.begin());
        json entry = {{"path", clip.path}, {"label", clip.label}, {"pred", pred}};
        entry["scores"] = std::vector<float>(s.data.begin(), s.data.end());
        entry["weights"] = std::vector<float>(w.data.begin(), w.data.end());
        arr.push_back(std::move(entry));
      }
      std::ofstream out(viz_out);
      out << arr.dump(2) << "\n";
      std::printf("wrote %zu entries to %s\n", arr.size(), viz_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
