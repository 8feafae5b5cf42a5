#include "fsga/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "fsga/checkpoint.hpp"
#include "fsga/data.hpp"
#include "fsga/errors.hpp"
#include "fsga/metrics.hpp"
#include "fsga/models.hpp"
#include "fsga/synthetic.hpp"
#include "fsga/trainer.hpp"

#include <CLI11.hpp>

namespace fsga::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// config files
// ---------------------------------------------------------------------------

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config file not found: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path, std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError(path, "top level must be an object");
  return j;
}

// key=value overrides; value parsed as JSON when possible, else as a string.
void apply_overrides(json& cfg, const std::vector<std::string>& overrides) {
  for (const std::string& ov : overrides) {
    const size_t eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError(ov, "override must look like section.key=value");
    const std::string path = ov.substr(0, eq);
    const std::string value = ov.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::parse_error&) {
      parsed = value;
    }
    json* node = &cfg;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError(ov, "empty override path");
    for (size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    (*node)[parts.back()] = parsed;
  }
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key))
      throw ConfigError(path.empty() ? key : path + "." + key, "unknown field");
  }
}

void validate_pretrain_config(const json& j) {
  check_keys(j, "", {"run_name", "run_dir", "pretrain"});
  if (!j.contains("pretrain")) throw ConfigError("pretrain", "required section missing");
  const json& p = j.at("pretrain");
  check_keys(p, "pretrain",
             {"steps", "image_size", "latent_dim", "batch_size", "learning_rate", "d_lr_scale",
              "adam_beta1", "adam_beta2", "d_input_noise", "seed", "eval_every", "dataset"});
  if (!p.contains("dataset")) throw ConfigError("pretrain.dataset", "required section missing");
  const json& d = p.at("dataset");
  const std::string kind = d.value("kind", "");
  if (kind == "shapeworld8") {
    check_keys(d, "pretrain.dataset", {"kind", "samples_per_mode", "noise_level"});
  } else if (kind == "image_dir") {
    check_keys(d, "pretrain.dataset", {"kind", "path", "limit", "seed"});
    if (!d.contains("path")) throw ConfigError("pretrain.dataset.path", "required field missing");
  } else {
    throw ConfigError("pretrain.dataset.kind", "must be shapeworld8 or image_dir");
  }
}

void validate_adapt_config(const json& j) {
  check_keys(j, "", {"run_name", "run_dir", "adapt"});
  if (!j.contains("adapt")) throw ConfigError("adapt", "required section missing");
  const json& a = j.at("adapt");
  check_keys(a, "adapt",
             {"source_checkpoint", "resume", "target", "lambda", "batch_size", "iterations",
              "anchor_sigma", "learning_rate", "d_lr_scale", "adam_beta1", "adam_beta2",
              "dist_batch", "d_input_noise", "seed", "eval_every", "checkpoint_every",
              "literal_eq1", "realism_mode"});
  if (!a.contains("source_checkpoint") && !a.contains("resume"))
    throw ConfigError("adapt.source_checkpoint", "required field missing (or use adapt.resume)");
  if (!a.contains("target")) throw ConfigError("adapt.target", "required section missing");
  const json& t = a.at("target");
  const std::string kind = t.value("kind", "");
  if (kind == "image_dir") {
    check_keys(t, "adapt.target", {"kind", "path", "k", "seed"});
    if (!t.contains("path")) throw ConfigError("adapt.target.path", "required field missing");
  } else if (kind == "shapeworld") {
    check_keys(t, "adapt.target", {"kind", "modes", "k", "hue_degrees"});
    if (!t.contains("modes")) throw ConfigError("adapt.target.modes", "required field missing");
  } else {
    throw ConfigError("adapt.target.kind", "must be image_dir or shapeworld");
  }
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_buf;
  localtime_r(&t, &tm_buf);
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm_buf);
  return buf;
}

std::string resolve_run_dir(const json& cfg, const std::string& fallback_name) {
  if (cfg.contains("run_dir")) return cfg.at("run_dir").get<std::string>();
  const char* root = std::getenv("FSGA_RUN_ROOT");
  const std::string base = root ? root : "runs";
  const std::string name = cfg.value("run_name", fallback_name);
  return base + "/" + name + "-" + timestamp();
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

// Generates m images in chunks through the prior.
Tensor generate_many(const GeneratorHandle& gen, int m, uint64_t seed, const char* purpose) {
  const GeneratorArch& a = gen.arch();
  const int s = a.output_size();
  Tensor out({m, a.out_channels, s, s});
  Rng rng = Rng::derive(seed, purpose, 0);
  const int chunk = 64;
  int done = 0;
  while (done < m) {
    const int n = std::min(chunk, m - done);
    const NoiseBatch z = sample_prior(gen.latent_spec(), n, rng);
    const Tensor imgs = generate(gen, z, false).first;
    std::copy(imgs.data(), imgs.data() + imgs.numel(),
              out.data() + static_cast<int64_t>(done) * a.out_channels * s * s);
    done += n;
  }
  return out;
}

// Same latents through two generators, for correspondence checks.
std::pair<Tensor, Tensor> generate_paired(const GeneratorHandle& a, const GeneratorHandle& b,
                                          int n, uint64_t seed, const char* purpose) {
  Rng rng = Rng::derive(seed, purpose, 0);
  const NoiseBatch z = sample_prior(a.latent_spec(), n, rng);
  return {generate(a, z, false).first, generate(b, z, false).first};
}

FeatureExtractor extractor_from_name(const std::string& name, int channels, int image_size,
                                     const std::string& weights_path = "") {
  if (name == "pixel") return FeatureExtractor::pixel();
  if (name == "fixed_random_conv") return FeatureExtractor::fixed_random_conv(channels, image_size);
  if (name == "external_perceptual") {
    if (weights_path.empty())
      throw std::invalid_argument("external_perceptual extractor needs a weights file");
    return FeatureExtractor::external_perceptual(weights_path);
  }
  throw std::invalid_argument("unknown extractor kind: " + name);
}

int guard(const char* what, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << what << ": config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << what << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << what << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << what << ": numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

int cmd_pretrain(const std::string& config_path, const std::vector<std::string>& overrides) {
  return guard("pretrain", [&]() {
    json cfg = load_config(config_path);
    apply_overrides(cfg, overrides);
    validate_pretrain_config(cfg);
    const json& p = cfg.at("pretrain");

    PretrainConfig pc;
    from_json(p, pc);
    const int steps = p.value("steps", 2000);

    Tensor images;
    std::string shape_world_json;
    const json& d = p.at("dataset");
    if (d.at("kind") == "shapeworld8") {
      ShapeWorldSpec spec = shape_world_8(pc.image_size, d.value("samples_per_mode", 500),
                                          d.value("noise_level", 0.05));
      Rng rng = Rng::derive(pc.seed, "shape-data", 0);
      images = make_shape_dataset(spec, rng).images;
      shape_world_json = shape_world_to_json(spec);
    } else {
      FewShotDataset ds = load_image_dir(d.at("path").get<std::string>(), pc.image_size,
                                         d.value("limit", 1000), d.value("seed", pc.seed));
      images = ds.images;
    }

    const std::string run_dir = resolve_run_dir(cfg, "pretrain");
    fs::create_directories(run_dir);
    json resolved = cfg;
    json jp;
    to_json(jp, pc);
    jp["steps"] = steps;
    jp["dataset"] = d;
    resolved["pretrain"] = jp;
    write_json(resolved, run_dir + "/config.json");

    pretrain_source(images, pc, steps, run_dir, shape_world_json);
    std::cout << "pretrain: wrote " << run_dir << "/source.fsga\n";
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// adapt
// ---------------------------------------------------------------------------

int cmd_adapt(const std::string& config_path, const std::vector<std::string>& overrides) {
  return guard("adapt", [&]() {
    json cfg = load_config(config_path);
    apply_overrides(cfg, overrides);
    validate_adapt_config(cfg);
    const json& a = cfg.at("adapt");

    AdaptationConfig ac;
    from_json(a, ac);

    const std::string run_dir = resolve_run_dir(cfg, "adapt");
    fs::create_directories(run_dir);

    if (a.contains("resume")) {
      CheckpointBundle bundle = load_checkpoint(a.at("resume").get<std::string>());
      if (!bundle.config) throw IoError("resume bundle has no adaptation config");
      // Resume keeps the stored config except for the iteration target.
      if (a.contains("iterations")) bundle.config->iterations = ac.iterations;
      FewShotDataset target = [&]() {
        const json& t = a.at("target");
        if (t.at("kind") == "image_dir") {
          return load_image_dir(t.at("path").get<std::string>(),
                                bundle.discriminator.arch().input_size, t.value("k", 10),
                                t.value("seed", bundle.config->seed));
        }
        ShapeWorldSpec spec = bundle.shape_world_json.empty()
                                  ? shape_world_8(bundle.discriminator.arch().input_size)
                                  : shape_world_from_json(bundle.shape_world_json);
        Rng rng = Rng::derive(bundle.config->seed, "testbed-target", 0);
        return make_fewshot_target(spec, t.at("modes").get<std::vector<int>>(),
                                   t.value("k", 10), t.value("hue_degrees", 120.0), rng);
      }();
      adapt_resume(bundle, target, run_dir);
      std::cout << "adapt: resumed run, wrote " << run_dir << "/checkpoint.fsga\n";
      return kExitOk;
    }

    CheckpointBundle source = load_checkpoint(a.at("source_checkpoint").get<std::string>());
    const int image_size = source.discriminator.arch().input_size;

    FewShotDataset target;
    std::string shape_world_json = source.shape_world_json;
    const json& t = a.at("target");
    if (t.at("kind") == "image_dir") {
      target = load_image_dir(t.at("path").get<std::string>(), image_size, t.value("k", 10),
                              t.value("seed", ac.seed));
    } else {
      ShapeWorldSpec spec = source.shape_world_json.empty()
                                ? shape_world_8(image_size)
                                : shape_world_from_json(source.shape_world_json);
      Rng rng = Rng::derive(ac.seed, "testbed-target", 0);
      target = make_fewshot_target(spec, t.at("modes").get<std::vector<int>>(), t.value("k", 10),
                                   t.value("hue_degrees", 120.0), rng);
      shape_world_json = shape_world_to_json(spec);
    }

    json resolved = cfg;
    json ja;
    to_json(ja, ac);
    ja["source_checkpoint"] = a.at("source_checkpoint");
    ja["target"] = t;
    resolved["adapt"] = ja;
    write_json(resolved, run_dir + "/config.json");

    adapt(source.generator, source.discriminator, target, ac, run_dir, shape_world_json);
    std::cout << "adapt: wrote " << run_dir << "/checkpoint.fsga\n";
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// sample / correspond
// ---------------------------------------------------------------------------

int cmd_sample(const std::string& checkpoint, int n, uint64_t seed, const std::string& out_path) {
  return guard("sample", [&]() {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    const CheckpointBundle bundle = load_checkpoint(checkpoint);
    const Tensor images = generate_many(bundle.generator, n, seed, "sample");
    save_image_grid(images, std::min(n, 8), out_path);
    std::cout << "sample: wrote " << out_path << "\n";
    return kExitOk;
  });
}

int cmd_correspond(const std::string& source_ckpt, const std::string& adapted_ckpt, int n,
                   uint64_t seed, const std::string& out_path) {
  return guard("correspond", [&]() {
    if (n < 1) throw std::invalid_argument("correspond: n must be >= 1");
    const CheckpointBundle src = load_checkpoint(source_ckpt);
    const CheckpointBundle adp = load_checkpoint(adapted_ckpt);
    if (!(src.generator.latent_spec() == adp.generator.latent_spec()))
      throw std::invalid_argument("correspond: checkpoints use different latent specs");

    auto [src_imgs, adp_imgs] =
        generate_paired(src.generator, adp.generator, n, seed, "correspond");

    // Two rows, column-aligned by latent: source above, adapted below.
    const int c = src_imgs.dim(1), h = src_imgs.dim(2), w = src_imgs.dim(3);
    Tensor grid({2 * n, c, h, w});
    std::copy(src_imgs.data(), src_imgs.data() + src_imgs.numel(), grid.data());
    std::copy(adp_imgs.data(), adp_imgs.data() + adp_imgs.numel(),
              grid.data() + src_imgs.numel());
    save_image_grid(grid, n, out_path);

    json sidecar;
    sidecar["n"] = n;
    sidecar["seed"] = seed;
    sidecar["source_checkpoint"] = source_ckpt;
    sidecar["adapted_checkpoint"] = adapted_ckpt;
    sidecar["rows"] = {"source", "adapted"};
    if (!adp.shape_world_json.empty()) {
      const ShapeWorldSpec spec = shape_world_from_json(adp.shape_world_json);
      sidecar["correspondence_score"] = correspondence_score(src_imgs, adp_imgs, spec);
    }
    write_json(sidecar, out_path + ".json");
    std::cout << "correspond: wrote " << out_path << " (+ sidecar)\n";
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const EvalOptions& opts) {
  return guard("eval", [&]() {
    if (opts.m < 1) throw std::invalid_argument("eval: m must be >= 1");
    const CheckpointBundle bundle = load_checkpoint(opts.checkpoint);
    const int image_size = bundle.generator.arch().output_size();
    const int channels = bundle.generator.arch().out_channels;

    const FewShotDataset target =
        load_image_dir(opts.target_dir, image_size, opts.target_limit, opts.seed);
    const FeatureExtractor fx = extractor_from_name(opts.extractor, channels, image_size);

    const Tensor generated = generate_many(bundle.generator, opts.m, opts.seed, "eval-gen");
    const DiversityResult div = intra_cluster_diversity(generated, target.images, fx);

    json report;
    report["checkpoint"] = opts.checkpoint;
    report["seed"] = opts.seed;
    report["extractor"] = opts.extractor;
    report["counts"] = {{"generated", opts.m}, {"target", target.k()}};
    report["intra_cluster_diversity"] = {{"score", div.score},
                                         {"per_cluster", div.per_cluster},
                                         {"cluster_sizes", div.cluster_sizes},
                                         {"excluded_clusters", div.excluded_clusters}};

    const Tensor fake_embed = fx.embed(generated);
    if (!opts.full_dir.empty()) {
      const FewShotDataset full =
          load_image_dir(opts.full_dir, image_size, opts.target_limit, opts.seed);
      const Tensor real_embed = fx.embed(full.images);
      const DensityCoverage dc = density_coverage(real_embed, fake_embed);
      report["density"] = dc.density;
      report["coverage"] = dc.coverage;
      const auto [mr, cr] = feature_moments(real_embed);
      const auto [mf, cf] = feature_moments(fake_embed);
      report["frechet"] = frechet_distance(mr, cr, mf, cf);
      report["counts"]["full"] = full.k();
    } else if (target.k() >= 2) {
      const Tensor real_embed = fx.embed(target.images);
      const DensityCoverage dc = density_coverage(real_embed, fake_embed);
      report["density"] = dc.density;
      report["coverage"] = dc.coverage;
    }

    const std::string out =
        opts.out_path.empty() ? opts.checkpoint + ".eval.json" : opts.out_path;
    write_json(report, out);
    std::cout << "eval: wrote " << out << "\n";
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// testbed
// ---------------------------------------------------------------------------

AblateReport run_ablate_dist(const std::string& out_dir, uint64_t seed,
                             const TestbedPreset& preset) {
  fs::create_directories(out_dir);
  const ShapeWorldSpec spec =
      shape_world_8(preset.image_size, preset.samples_per_mode, preset.noise_level);
  const std::string spec_json = shape_world_to_json(spec);

  // Shared pretrained source, reused by every seed of the scenario.
  const std::string source_path = out_dir + "/source/source.fsga";
  if (!fs::exists(source_path)) {
    Rng rng = Rng::derive(preset.pretrain_seed, "shape-data", 0);
    const LabeledDataset ds = make_shape_dataset(spec, rng);
    PretrainConfig pc;
    pc.image_size = preset.image_size;
    pc.batch_size = preset.pretrain_batch;
    pc.learning_rate = preset.pretrain_lr;
    pc.seed = preset.pretrain_seed;
    pretrain_source(ds.images, pc, preset.pretrain_steps, out_dir + "/source", spec_json);
  }
  const CheckpointBundle source = load_checkpoint(source_path);

  Rng target_rng = Rng::derive(seed, "testbed-target", 0);
  const FewShotDataset target = make_fewshot_target(spec, preset.target_modes, preset.target_k,
                                                    preset.target_hue_degrees, target_rng);
  save_image_grid(target.images, preset.target_k, out_dir + "/target-seed" +
                                                      std::to_string(seed) + ".png");

  auto run_one = [&](double lambda, const std::string& tag) {
    AdaptationConfig ac;
    ac.lambda = lambda;
    ac.iterations = preset.adapt_iterations;
    ac.learning_rate = preset.adapt_lr;
    ac.seed = seed;
    const std::string dir = out_dir + "/" + tag + "-seed" + std::to_string(seed);
    return adapt(source.generator, source.discriminator, target, ac, dir, spec_json);
  };
  const CheckpointBundle full = run_one(preset.lambda_full, "adapt-full");
  const CheckpointBundle ablated = run_one(0.0, "adapt-ablated");

  const FeatureExtractor fx =
      FeatureExtractor::fixed_random_conv(3, preset.image_size);
  const Tensor gen_full = generate_many(full.generator, preset.eval_m, seed, "eval-gen");
  const Tensor gen_ablated = generate_many(ablated.generator, preset.eval_m, seed, "eval-gen");

  AblateReport rep;
  rep.seed = seed;
  rep.diversity_full = intra_cluster_diversity(gen_full, target.images, fx).score;
  rep.diversity_ablated = intra_cluster_diversity(gen_ablated, target.images, fx).score;

  auto [src_full, adp_full] = generate_paired(source.generator, full.generator,
                                              preset.correspondence_n, seed, "corr");
  auto [src_abl, adp_abl] = generate_paired(source.generator, ablated.generator,
                                            preset.correspondence_n, seed, "corr");
  rep.correspondence_full = correspondence_score(src_full, adp_full, spec);
  rep.correspondence_ablated = correspondence_score(src_abl, adp_abl, spec);
  rep.source_mode_coverage = mode_coverage(src_full, spec);

  rep.diversity_gate = rep.diversity_full > rep.diversity_ablated;
  rep.correspondence_gate = rep.correspondence_full > rep.correspondence_ablated;

  json j;
  j["scenario"] = "ablate-dist";
  j["seed"] = seed;
  j["diversity"] = {{"full", rep.diversity_full}, {"ablated", rep.diversity_ablated}};
  j["correspondence"] = {{"full", rep.correspondence_full},
                         {"ablated", rep.correspondence_ablated}};
  j["source_mode_coverage"] = rep.source_mode_coverage;
  j["gates"] = {{"diversity", rep.diversity_gate}, {"correspondence", rep.correspondence_gate}};
  write_json(j, out_dir + "/report-seed" + std::to_string(seed) + ".json");
  return rep;
}

int cmd_testbed(const std::string& scenario, uint64_t seed, const std::string& out_dir) {
  return guard("testbed", [&]() {
    if (scenario != "ablate-dist") {
      std::cerr << "testbed: unknown scenario '" << scenario << "' (known: ablate-dist)\n";
      return kExitUsage;
    }
    const AblateReport rep = run_ablate_dist(out_dir, seed);
    std::cout << "testbed ablate-dist seed=" << seed << "\n"
              << "  diversity      full=" << rep.diversity_full
              << " ablated=" << rep.diversity_ablated
              << (rep.diversity_gate ? "  [ok]" : "  [FAIL]") << "\n"
              << "  correspondence full=" << rep.correspondence_full
              << " ablated=" << rep.correspondence_ablated
              << (rep.correspondence_gate ? "  [ok]" : "  [not higher]") << "\n";
    // The hard per-seed gate is the diversity direction; the correspondence
    // direction is allowed to miss in a minority of seeds and is reported.
    return rep.diversity_gate ? kExitOk : kExitGate;
  });
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

int dispatch(int argc, char** argv) {
  CLI::App app{"fsga: few-shot generative-adversarial adaptation toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto* pre = app.add_subcommand("pretrain", "train a toy source model");
  pre->add_option("--config", config_path, "config JSON")->required();
  pre->add_option("--set", overrides, "override config fields (a.b=value)");

  auto* adp = app.add_subcommand("adapt", "adapt a source model to a few-shot target");
  adp->add_option("--config", config_path, "config JSON")->required();
  adp->add_option("--set", overrides, "override config fields (a.b=value)");

  std::string ckpt, out_path, source_ckpt, adapted_ckpt;
  int n = 16;
  uint64_t seed = 0;
  auto* smp = app.add_subcommand("sample", "render a sample grid from a checkpoint");
  smp->add_option("--ckpt", ckpt, "checkpoint bundle")->required();
  smp->add_option("--n", n, "sample count");
  smp->add_option("--seed", seed, "latent seed");
  smp->add_option("--out", out_path, "output PNG")->required();

  auto* cor = app.add_subcommand("correspond", "paired source/adapted grid from shared latents");
  cor->add_option("--source-ckpt", source_ckpt, "source checkpoint")->required();
  cor->add_option("--adapted-ckpt", adapted_ckpt, "adapted checkpoint")->required();
  cor->add_option("--n", n, "column count");
  cor->add_option("--seed", seed, "latent seed");
  cor->add_option("--out", out_path, "output PNG")->required();

  EvalOptions ev;
  auto* evl = app.add_subcommand("eval", "evaluate an adapted checkpoint");
  evl->add_option("--ckpt", ev.checkpoint, "checkpoint bundle")->required();
  evl->add_option("--target-dir", ev.target_dir, "few-shot target images")->required();
  evl->add_option("--full-dir", ev.full_dir, "full reference set (optional)");
  evl->add_option("--m", ev.m, "generated sample count");
  evl->add_option("--limit", ev.target_limit, "max images per directory");
  evl->add_option("--seed", ev.seed, "seed");
  evl->add_option("--extractor", ev.extractor, "pixel | fixed_random_conv");
  evl->add_option("--out", ev.out_path, "report JSON path");

  std::string scenario = "ablate-dist", out_dir = "testbed-out";
  auto* tb = app.add_subcommand("testbed", "packaged synthetic experiments");
  tb->add_option("--scenario", scenario, "scenario name");
  tb->add_option("--seed", seed, "scenario seed");
  tb->add_option("--out-dir", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  if (pre->parsed()) return cmd_pretrain(config_path, overrides);
  if (adp->parsed()) return cmd_adapt(config_path, overrides);
  if (smp->parsed()) return cmd_sample(ckpt, n, seed, out_path);
  if (cor->parsed()) return cmd_correspond(source_ckpt, adapted_ckpt, n, seed, out_path);
  if (evl->parsed()) return cmd_eval(ev);
  if (tb->parsed()) return cmd_testbed(scenario, seed, out_dir);
  return kExitUsage;
}

}  // namespace fsga::cli
