#include "fsga/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "fsga/errors.hpp"

namespace fsga {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(RealismMode mode) {
  switch (mode) {
    case RealismMode::anchor_relaxed: return "anchor_relaxed";
    case RealismMode::image_only: return "image_only";
    case RealismMode::patch_only: return "patch_only";
  }
  return "anchor_relaxed";
}

RealismMode realism_mode_from_string(const std::string& s) {
  if (s == "anchor_relaxed") return RealismMode::anchor_relaxed;
  if (s == "image_only") return RealismMode::image_only;
  if (s == "patch_only") return RealismMode::patch_only;
  throw std::invalid_argument("unknown realism mode: " + s);
}

void AdaptationConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1e5))
    throw std::invalid_argument("config.lambda must lie in [0, 1e5]");
  if (batch_size < 2) throw std::invalid_argument("config.batch_size must be >= 2");
  if (dist_batch < 2) throw std::invalid_argument("config.dist_batch must be >= 2");
  if (iterations < 1) throw std::invalid_argument("config.iterations must be >= 1");
  if (anchor_sigma < 0.0) throw std::invalid_argument("config.anchor_sigma must be >= 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("config.learning_rate must be > 0");
  if (!(d_lr_scale > 0.0)) throw std::invalid_argument("config.d_lr_scale must be > 0");
  if (d_input_noise < 0.0) throw std::invalid_argument("config.d_input_noise must be >= 0");
  if (eval_every < 0 || checkpoint_every < 0)
    throw std::invalid_argument("config cadences must be >= 0");
}

void PretrainConfig::validate() const {
  if (image_size != 32 && image_size != 64)
    throw std::invalid_argument("pretrain.image_size must be 32 or 64");
  if (latent_dim < 1) throw std::invalid_argument("pretrain.latent_dim must be >= 1");
  if (batch_size < 2) throw std::invalid_argument("pretrain.batch_size must be >= 2");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("pretrain.learning_rate must be > 0");
  if (!(d_lr_scale > 0.0)) throw std::invalid_argument("pretrain.d_lr_scale must be > 0");
  if (d_input_noise < 0.0) throw std::invalid_argument("pretrain.d_input_noise must be >= 0");
}

void to_json(json& j, const AdaptationConfig& c) {
  j = json{{"lambda", c.lambda},
           {"batch_size", c.batch_size},
           {"iterations", c.iterations},
           {"anchor_sigma", c.anchor_sigma},
           {"learning_rate", c.learning_rate},
           {"d_lr_scale", c.d_lr_scale},
           {"adam_beta1", c.adam_beta1},
           {"adam_beta2", c.adam_beta2},
           {"dist_batch", c.dist_batch},
           {"d_input_noise", c.d_input_noise},
           {"seed", c.seed},
           {"eval_every", c.eval_every},
           {"checkpoint_every", c.checkpoint_every},
           {"literal_eq1", c.literal_eq1},
           {"realism_mode", to_string(c.realism_mode)}};
}

void from_json(const json& j, AdaptationConfig& c) {
  c.lambda = j.value("lambda", c.lambda);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.iterations = j.value("iterations", c.iterations);
  c.anchor_sigma = j.value("anchor_sigma", c.anchor_sigma);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.d_lr_scale = j.value("d_lr_scale", c.d_lr_scale);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.dist_batch = j.value("dist_batch", c.dist_batch);
  c.d_input_noise = j.value("d_input_noise", c.d_input_noise);
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.literal_eq1 = j.value("literal_eq1", c.literal_eq1);
  c.realism_mode = realism_mode_from_string(j.value("realism_mode", to_string(c.realism_mode)));
}

void to_json(json& j, const PretrainConfig& c) {
  j = json{{"image_size", c.image_size},   {"latent_dim", c.latent_dim},
           {"batch_size", c.batch_size},   {"learning_rate", c.learning_rate},
           {"d_lr_scale", c.d_lr_scale},   {"adam_beta1", c.adam_beta1},
           {"adam_beta2", c.adam_beta2},   {"d_input_noise", c.d_input_noise},
           {"seed", c.seed},               {"eval_every", c.eval_every}};
}

void from_json(const json& j, PretrainConfig& c) {
  c.image_size = j.value("image_size", c.image_size);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.d_lr_scale = j.value("d_lr_scale", c.d_lr_scale);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.d_input_noise = j.value("d_input_noise", c.d_input_noise);
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
}

namespace {

Value adv_g_graph(Graph& g, Value fake_logits, bool literal) {
  if (literal) return g.mean_all(fake_logits);
  return g.mean_all(g.softplus(g.neg(fake_logits)));
}

Value adv_d_graph(Graph& g, Value real_logits, Value fake_logits, bool literal) {
  if (literal) return g.sub(g.mean_all(real_logits), g.mean_all(fake_logits));
  return g.add(g.mean_all(g.softplus(g.neg(real_logits))),
               g.mean_all(g.softplus(fake_logits)));
}

// Spatial mean per map, averaged across patch layers -> (N,1).
Value patch_mean_value(Graph& g, const std::vector<std::pair<std::string, Value>>& maps) {
  Value acc{};
  for (const auto& [name, v] : maps) {
    Value m = g.mean_per_sample(v);
    acc = acc.valid() ? g.add(acc, m) : m;
  }
  return g.scale(acc, 1.0f / static_cast<float>(maps.size()));
}

// Instance noise: blurs the real/fake boundary the discriminator sees so it
// cannot saturate on near-discrete data. Never applied to metric or sample
// paths.
Tensor with_input_noise(const Tensor& images, double sigma, Rng rng) {
  if (sigma <= 0.0) return images;
  Tensor out = images;
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] += static_cast<float>(sigma) * rng.normal_f();
  return out;
}

Value with_input_noise(Graph& g, Value images, double sigma, Rng rng) {
  if (sigma <= 0.0) return images;
  Tensor noise(g.val(images).shape());
  for (int64_t i = 0; i < noise.numel(); ++i) noise[i] = static_cast<float>(sigma) * rng.normal_f();
  return g.add(images, g.input(std::move(noise)));
}

void append_loss_record(std::ofstream& out, uint64_t step, const StepReport& rep) {
  if (!out.is_open()) return;
  json j;
  j["step"] = step;
  j["adv_image"] = rep.g.adv_image;
  j["adv_patch"] = rep.g.adv_patch;
  j["dist"] = rep.g.dist;
  j["total"] = rep.g.total;
  j["lambda"] = rep.g.lambda;
  j["d_total"] = rep.d_total;
  out << j.dump() << "\n";
}

}  // namespace

AdaptState init_adaptation(const GeneratorHandle& source_gen,
                           const DiscriminatorHandle& source_disc,
                           const FewShotDataset& target, const AdaptationConfig& config) {
  config.validate();
  target.validate();
  if (source_gen.frozen())
    throw std::invalid_argument("init_adaptation: source generator handle must be trainable");
  if (target.image_size() != source_disc.arch().input_size)
    throw std::invalid_argument("init_adaptation: target image size does not match models");

  AdaptState st;
  st.adapted = source_gen;
  st.frozen_source = clone_frozen(source_gen);
  st.disc = source_disc;
  st.anchors = create_anchor_set(source_gen.latent_spec(), target.k(), config.seed,
                                 config.anchor_sigma);
  st.config = config;
  st.opt_g = Adam(static_cast<float>(config.learning_rate), static_cast<float>(config.adam_beta1),
                  static_cast<float>(config.adam_beta2));
  st.opt_d = Adam(static_cast<float>(config.learning_rate * config.d_lr_scale),
                  static_cast<float>(config.adam_beta1), static_cast<float>(config.adam_beta2));
  st.opt_g.attach(st.adapted.params());
  st.opt_d.attach(st.disc.params());
  return st;
}

StepReport train_step(AdaptState& st, const Tensor& real_batch) {
  const AdaptationConfig& cfg = st.config;
  if (real_batch.rank() != 4 || real_batch.dim(0) < 1)
    throw std::invalid_argument("train_step: empty real batch");
  const LatentSpec spec = st.adapted.latent_spec();
  const uint64_t step = st.step;
  const bool image_on = cfg.realism_mode != RealismMode::patch_only;
  const bool patch_on =
      cfg.realism_mode != RealismMode::image_only && !st.disc.arch().patch_layers.empty();

  // One noise batch per consumer per step.
  NoiseBatch z_img, z_patch;
  if (image_on) {
    Rng r = Rng::derive(cfg.seed, "z-image", step);
    if (cfg.realism_mode == RealismMode::anchor_relaxed) {
      z_img = sample_anchor(st.anchors, cfg.batch_size, r);
      ++st.counters.anchor_batches;
    } else {
      z_img = sample_prior(spec, cfg.batch_size, r);
      ++st.counters.prior_image_batches;
    }
  }
  if (patch_on) {
    Rng r = Rng::derive(cfg.seed, "z-patch", step);
    z_patch = sample_prior(spec, cfg.batch_size, r);
    ++st.counters.prior_patch_batches;
  }
  Rng rd = Rng::derive(cfg.seed, "z-dist", step);
  NoiseBatch z_dist = sample_prior(spec, cfg.dist_batch, rd);
  ++st.counters.dist_batches;

  // Discriminator phase: generator held constant.
  Tensor fake_img, fake_patch;
  if (image_on) fake_img = generate(st.adapted, z_img, false).first;
  if (patch_on) fake_patch = generate(st.adapted, z_patch, false).first;

  StepReport rep;
  {
    Graph g;
    const Tensor real_noisy = with_input_noise(real_batch, cfg.d_input_noise,
                                               Rng::derive(cfg.seed, "noise-real", step));
    auto real_fwd = st.disc.forward(g, g.input(real_noisy), true);
    Value loss{};
    if (image_on) {
      const Tensor fake_noisy = with_input_noise(fake_img, cfg.d_input_noise,
                                                 Rng::derive(cfg.seed, "noise-fimg", step));
      auto fake_fwd = st.disc.forward(g, g.input(fake_noisy), true);
      loss = adv_d_graph(g, real_fwd.image_logits, fake_fwd.image_logits, cfg.literal_eq1);
    }
    if (patch_on) {
      const Tensor fake_noisy = with_input_noise(fake_patch, cfg.d_input_noise,
                                                 Rng::derive(cfg.seed, "noise-fpatch", step));
      auto fake_fwd = st.disc.forward(g, g.input(fake_noisy), true);
      Value t = adv_d_graph(g, patch_mean_value(g, real_fwd.patch_maps),
                            patch_mean_value(g, fake_fwd.patch_maps), cfg.literal_eq1);
      loss = loss.valid() ? g.add(loss, t) : t;
    }
    rep.d_total = g.val(loss)[0];
    if (!std::isfinite(rep.d_total))
      throw NumericError("train_step: non-finite discriminator loss at step " +
                         std::to_string(step));
    g.backward(loss);
    st.opt_d.step(st.disc.params(), g);
  }

  // Generator phase: discriminator held constant. The same noise batches are
  // reused, freshly forwarded through the updated models.
  {
    Graph g;
    Value total{};
    double adv_image = 0.0, adv_patch = 0.0;
    if (image_on) {
      auto gen_fwd = st.adapted.forward(g, g.input(z_img.vectors), false, true);
      Value noisy = with_input_noise(g, gen_fwd.image, cfg.d_input_noise,
                                     Rng::derive(cfg.seed, "noise-gimg", step));
      auto disc_fwd = st.disc.forward(g, noisy, false);
      Value v = adv_g_graph(g, disc_fwd.image_logits, cfg.literal_eq1);
      adv_image = g.val(v)[0];
      total = v;
    }
    if (patch_on) {
      auto gen_fwd = st.adapted.forward(g, g.input(z_patch.vectors), false, true);
      Value noisy = with_input_noise(g, gen_fwd.image, cfg.d_input_noise,
                                     Rng::derive(cfg.seed, "noise-gpatch", step));
      auto disc_fwd = st.disc.forward(g, noisy, false);
      Value v = adv_g_graph(g, patch_mean_value(g, disc_fwd.patch_maps), cfg.literal_eq1);
      adv_patch = g.val(v)[0];
      total = total.valid() ? g.add(total, v) : v;
    }
    // Distance consistency: identical noise through frozen source and
    // adapted generator; source side constant.
    auto [src_images, src_stack] = generate(st.frozen_source, z_dist, true);
    (void)src_images;
    const auto source_rows = similarity_rows(*src_stack);
    auto adapted_fwd = st.adapted.forward(g, g.input(z_dist.vectors), true, true);
    std::vector<Value> taps;
    taps.reserve(adapted_fwd.taps.size());
    for (auto& [name, v] : adapted_fwd.taps) taps.push_back(v);
    Value dist_v = g.dist_consistency(taps, source_rows);
    const double dist = g.val(dist_v)[0];
    Value weighted = g.scale(dist_v, static_cast<float>(cfg.lambda));
    total = total.valid() ? g.add(total, weighted) : weighted;

    const double g_total = g.val(total)[0];
    if (!std::isfinite(g_total))
      throw NumericError("train_step: non-finite generator loss at step " + std::to_string(step));
    g.backward(total);
    st.opt_g.step(st.adapted.params(), g);
    rep.g = total_generator_loss(adv_image, adv_patch, dist, cfg.lambda);
  }

  ++st.step;
  return rep;
}

namespace {

CheckpointBundle run_adaptation(AdaptState& st, const FewShotDataset& target,
                                const std::string& run_dir) {
  const AdaptationConfig& cfg = st.config;
  std::ofstream log;
  if (!run_dir.empty()) {
    fs::create_directories(run_dir);
    if (cfg.eval_every > 0) fs::create_directories(run_dir + "/samples");
    std::ofstream cfg_out(run_dir + "/config.json");
    json j;
    to_json(j, cfg);
    cfg_out << j.dump(2) << "\n";
    log.open(run_dir + "/loss_log.jsonl", std::ios::app);
  }

  Rng grid_rng = Rng::derive(cfg.seed, "eval-grid", 0);
  const NoiseBatch grid_z = sample_prior(st.adapted.latent_spec(), 16, grid_rng);

  while (st.step < static_cast<uint64_t>(cfg.iterations)) {
    Rng data_rng = Rng::derive(cfg.seed, "data", st.step);
    const Tensor real = sample_batch(target, cfg.batch_size, data_rng);
    ++st.counters.real_batches;
    const uint64_t this_step = st.step;
    StepReport rep;
    try {
      rep = train_step(st, real);
    } catch (const NumericError&) {
      if (!run_dir.empty()) {
        CheckpointBundle diag = bundle_from_state(st);
        save_checkpoint(diag, run_dir + "/diagnostic.fsga");
      }
      throw;
    }
    append_loss_record(log, this_step, rep);
    if (!run_dir.empty() && cfg.eval_every > 0 && (this_step + 1) % cfg.eval_every == 0) {
      const Tensor samples = generate(st.adapted, grid_z, false).first;
      char name[64];
      std::snprintf(name, sizeof(name), "/samples/step_%06llu.png",
                    static_cast<unsigned long long>(this_step + 1));
      save_image_grid(samples, 4, run_dir + name);
    }
    if (!run_dir.empty() && cfg.checkpoint_every > 0 &&
        (this_step + 1) % cfg.checkpoint_every == 0 &&
        st.step < static_cast<uint64_t>(cfg.iterations)) {
      CheckpointBundle mid = bundle_from_state(st);
      char name[64];
      std::snprintf(name, sizeof(name), "/checkpoint_%06llu.fsga",
                    static_cast<unsigned long long>(st.step));
      save_checkpoint(mid, run_dir + name);
    }
  }

  CheckpointBundle out = bundle_from_state(st);
  if (!run_dir.empty()) save_checkpoint(out, run_dir + "/checkpoint.fsga");
  return out;
}

}  // namespace

CheckpointBundle bundle_from_state(const AdaptState& st) {
  CheckpointBundle b;
  b.kind = "adaptation";
  b.step = st.step;
  b.seed = st.config.seed;
  b.generator = st.adapted;
  b.frozen_source = st.frozen_source;
  b.discriminator = st.disc;
  b.anchors = st.anchors;
  b.config = st.config;
  b.shape_world_json = st.shape_world_json;
  b.opt_g = st.opt_g;
  b.opt_d = st.opt_d;
  return b;
}

AdaptState state_from_bundle(const CheckpointBundle& b) {
  if (b.kind != "adaptation")
    throw std::invalid_argument("state_from_bundle: not an adaptation bundle");
  if (!b.frozen_source || !b.anchors || !b.config)
    throw std::invalid_argument("state_from_bundle: bundle is missing adaptation fields");
  AdaptState st;
  st.adapted = b.generator;
  st.frozen_source = *b.frozen_source;
  st.disc = b.discriminator;
  st.anchors = *b.anchors;
  st.config = *b.config;
  st.opt_g = b.opt_g;
  st.opt_d = b.opt_d;
  if (!st.opt_g.attached_to(st.adapted.params())) st.opt_g.attach(st.adapted.params());
  if (!st.opt_d.attached_to(st.disc.params())) st.opt_d.attach(st.disc.params());
  st.step = b.step;
  st.shape_world_json = b.shape_world_json;
  return st;
}

CheckpointBundle adapt(const GeneratorHandle& source_gen,
                       const DiscriminatorHandle& source_disc, const FewShotDataset& target,
                       const AdaptationConfig& config, const std::string& run_dir,
                       const std::string& shape_world_json) {
  AdaptState st = init_adaptation(source_gen, source_disc, target, config);
  st.shape_world_json = shape_world_json;
  return run_adaptation(st, target, run_dir);
}

CheckpointBundle adapt_resume(const CheckpointBundle& bundle, const FewShotDataset& target,
                              const std::string& run_dir) {
  AdaptState st = state_from_bundle(bundle);
  if (target.k() != st.anchors.k())
    throw std::invalid_argument("adapt_resume: target size differs from the anchored run");
  return run_adaptation(st, target, run_dir);
}

std::pair<GeneratorHandle, DiscriminatorHandle> pretrain_source(
    const Tensor& images, const PretrainConfig& config, int steps, const std::string& run_dir,
    const std::string& shape_world_json) {
  config.validate();
  if (images.rank() != 4 || images.dim(0) < 2)
    throw std::invalid_argument("pretrain_source: dataset must be a non-trivial NCHW batch");
  if (images.dim(2) != config.image_size)
    throw std::invalid_argument("pretrain_source: dataset size does not match config.image_size");
  if (steps < 1) throw std::invalid_argument("pretrain_source: steps must be >= 1");
  if (images.dim(0) < 1000)
    std::cerr << "pretrain_source: dataset has only " << images.dim(0)
              << " samples; the source model may undertrain\n";

  GeneratorHandle gen(toy_generator_arch(config.image_size, config.latent_dim),
                      Rng::derive(config.seed, "pretrain-gen", 0).next_u64());
  DiscriminatorHandle disc(toy_discriminator_arch(config.image_size),
                           Rng::derive(config.seed, "pretrain-disc", 0).next_u64());
  Adam opt_g(static_cast<float>(config.learning_rate), static_cast<float>(config.adam_beta1),
             static_cast<float>(config.adam_beta2));
  Adam opt_d(static_cast<float>(config.learning_rate * config.d_lr_scale),
             static_cast<float>(config.adam_beta1), static_cast<float>(config.adam_beta2));
  opt_g.attach(gen.params());
  opt_d.attach(disc.params());

  std::ofstream log;
  if (!run_dir.empty()) {
    fs::create_directories(run_dir);
    if (config.eval_every > 0) fs::create_directories(run_dir + "/samples");
    log.open(run_dir + "/pretrain_log.jsonl", std::ios::app);
  }
  Rng grid_rng = Rng::derive(config.seed, "eval-grid", 0);
  const NoiseBatch grid_z = sample_prior(gen.latent_spec(), 16, grid_rng);

  const int n_data = images.dim(0);
  const int64_t sample = images.numel() / n_data;
  const LatentSpec spec = gen.latent_spec();

  for (int step = 0; step < steps; ++step) {
    Rng data_rng = Rng::derive(config.seed, "p-data", static_cast<uint64_t>(step));
    Tensor real({config.batch_size, images.dim(1), images.dim(2), images.dim(3)});
    for (int i = 0; i < config.batch_size; ++i) {
      const int64_t src = static_cast<int64_t>(data_rng.uniform_index(static_cast<uint64_t>(n_data)));
      std::copy(images.data() + src * sample, images.data() + (src + 1) * sample,
                real.data() + static_cast<int64_t>(i) * sample);
    }
    Rng z_rng = Rng::derive(config.seed, "p-z", static_cast<uint64_t>(step));
    const NoiseBatch z = sample_prior(spec, config.batch_size, z_rng);

    const Tensor fake = generate(gen, z, false).first;
    double d_loss, g_loss;
    {
      Graph g;
      const Tensor real_noisy = with_input_noise(real, config.d_input_noise,
                                                 Rng::derive(config.seed, "p-noise-real", static_cast<uint64_t>(step)));
      const Tensor fake_noisy = with_input_noise(fake, config.d_input_noise,
                                                 Rng::derive(config.seed, "p-noise-fake", static_cast<uint64_t>(step)));
      auto real_fwd = disc.forward(g, g.input(real_noisy), true);
      auto fake_fwd = disc.forward(g, g.input(fake_noisy), true);
      Value loss = adv_d_graph(g, real_fwd.image_logits, fake_fwd.image_logits, false);
      d_loss = g.val(loss)[0];
      if (!std::isfinite(d_loss))
        throw NumericError("pretrain_source: non-finite discriminator loss at step " +
                           std::to_string(step));
      g.backward(loss);
      opt_d.step(disc.params(), g);
    }
    {
      Graph g;
      auto gen_fwd = gen.forward(g, g.input(z.vectors), false, true);
      Value noisy = with_input_noise(g, gen_fwd.image, config.d_input_noise,
                                     Rng::derive(config.seed, "p-noise-g", static_cast<uint64_t>(step)));
      auto disc_fwd = disc.forward(g, noisy, false);
      Value loss = adv_g_graph(g, disc_fwd.image_logits, false);
      g_loss = g.val(loss)[0];
      if (!std::isfinite(g_loss))
        throw NumericError("pretrain_source: non-finite generator loss at step " +
                           std::to_string(step));
      g.backward(loss);
      opt_g.step(gen.params(), g);
    }
    if (log.is_open()) {
      json j;
      j["step"] = step;
      j["d_loss"] = d_loss;
      j["g_loss"] = g_loss;
      log << j.dump() << "\n";
    }
    if (!run_dir.empty() && config.eval_every > 0 && (step + 1) % config.eval_every == 0) {
      const Tensor samples = generate(gen, grid_z, false).first;
      char name[64];
      std::snprintf(name, sizeof(name), "/samples/step_%06d.png", step + 1);
      save_image_grid(samples, 4, run_dir + name);
    }
  }

  if (!run_dir.empty()) {
    CheckpointBundle b;
    b.kind = "source";
    b.step = static_cast<uint64_t>(steps);
    b.seed = config.seed;
    b.generator = gen;
    b.discriminator = disc;
    b.shape_world_json = shape_world_json;
    b.opt_g = opt_g;
    b.opt_d = opt_d;
    save_checkpoint(b, run_dir + "/source.fsga");
  }
  return {std::move(gen), std::move(disc)};
}

}  // namespace fsga
