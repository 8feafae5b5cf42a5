#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <unistd.h>

#include "fsga/checkpoint.hpp"
#include "fsga/cli.hpp"
#include "fsga/data.hpp"
#include "fsga/synthetic.hpp"

using namespace fsga;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("fsga-cli-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string tiny_pretrain_config(const fs::path& run_dir) {
  json j;
  j["run_dir"] = run_dir.string();
  j["pretrain"] = {{"steps", 4},
                   {"batch_size", 4},
                   {"seed", 3},
                   {"dataset", {{"kind", "shapeworld8"}, {"samples_per_mode", 6}}}};
  return j.dump(2);
}

}  // namespace

TEST_CASE("cli: pretrain then adapt on the synthetic testbed") {
  TempDir dir("flow");
  const fs::path pre_dir = dir.path / "pre";
  write_file(dir.path / "pre.json", tiny_pretrain_config(pre_dir));
  REQUIRE(cli::cmd_pretrain((dir.path / "pre.json").string(), {}) == cli::kExitOk);
  REQUIRE(fs::exists(pre_dir / "source.fsga"));
  CHECK(fs::exists(pre_dir / "config.json"));

  json a;
  a["run_dir"] = (dir.path / "adapt").string();
  a["adapt"] = {{"source_checkpoint", (pre_dir / "source.fsga").string()},
                {"iterations", 3},
                {"seed", 0},
                {"target", {{"kind", "shapeworld"}, {"modes", {0, 3, 5}}, {"k", 10}}}};
  write_file(dir.path / "adapt.json", a.dump(2));
  REQUIRE(cli::cmd_adapt((dir.path / "adapt.json").string(), {}) == cli::kExitOk);
  const fs::path ckpt = dir.path / "adapt" / "checkpoint.fsga";
  REQUIRE(fs::exists(ckpt));

  // k inferred from the target: the anchor set has exactly 10 base points.
  const CheckpointBundle bundle = load_checkpoint(ckpt.string());
  CHECK(bundle.anchors->k() == 10);
  CHECK(bundle.step == 3);
  CHECK(!bundle.shape_world_json.empty());

  // resume continues the step count
  json r;
  r["run_dir"] = (dir.path / "resumed").string();
  r["adapt"] = {{"resume", ckpt.string()},
                {"iterations", 5},
                {"target", {{"kind", "shapeworld"}, {"modes", {0, 3, 5}}, {"k", 10}}}};
  write_file(dir.path / "resume.json", r.dump(2));
  REQUIRE(cli::cmd_adapt((dir.path / "resume.json").string(), {}) == cli::kExitOk);
  const CheckpointBundle resumed =
      load_checkpoint((dir.path / "resumed" / "checkpoint.fsga").string());
  CHECK(resumed.step == 5);

  // sample: identical grids for identical seeds
  const std::string g1 = (dir.path / "g1.png").string();
  const std::string g2 = (dir.path / "g2.png").string();
  REQUIRE(cli::cmd_sample(ckpt.string(), 4, 9, g1) == cli::kExitOk);
  REQUIRE(cli::cmd_sample(ckpt.string(), 4, 9, g2) == cli::kExitOk);
  std::ifstream f1(g1, std::ios::binary), f2(g2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  // correspond: grid + sidecar with a correspondence score on the testbed
  const std::string grid = (dir.path / "corr.png").string();
  REQUIRE(cli::cmd_correspond((pre_dir / "source.fsga").string(), ckpt.string(), 5, 2, grid) ==
          cli::kExitOk);
  REQUIRE(fs::exists(grid));
  std::ifstream side(grid + ".json");
  REQUIRE(side.good());
  json sj;
  side >> sj;
  CHECK(sj.contains("correspondence_score"));
  CHECK(sj["n"] == 5);

  // eval: write target images to a directory first
  const fs::path tdir = dir.path / "target";
  fs::create_directories(tdir);
  {
    Rng trng = Rng::derive(0, "t", 0);
    const ShapeWorldSpec spec = shape_world_from_json(bundle.shape_world_json);
    const FewShotDataset target = make_fewshot_target(spec, {0, 3, 5}, 10, 120.0, trng);
    const int64_t f = target.images.numel() / target.k();
    for (int i = 0; i < target.k(); ++i) {
      Tensor img({3, spec.image_size, spec.image_size});
      std::copy(target.images.data() + i * f, target.images.data() + (i + 1) * f, img.data());
      save_image(img, (tdir / ("t" + std::to_string(i) + ".png")).string());
    }
  }
  cli::EvalOptions ev;
  ev.checkpoint = ckpt.string();
  ev.target_dir = tdir.string();
  ev.m = 24;
  ev.out_path = (dir.path / "report.json").string();
  REQUIRE(cli::cmd_eval(ev) == cli::kExitOk);
  std::ifstream rep(ev.out_path);
  REQUIRE(rep.good());
  json rj;
  rep >> rj;
  CHECK(rj.contains("intra_cluster_diversity"));
  CHECK(rj["counts"]["generated"] == 24);
  CHECK(rj.contains("density"));
  CHECK(rj.contains("coverage"));
}

TEST_CASE("cli: config validation failures carry field paths and exit 1") {
  TempDir dir("badcfg");
  write_file(dir.path / "bad.json", R"({"pretrain": {"steps": 2, "bogus_field": 1,
    "dataset": {"kind": "shapeworld8"}}})");
  CHECK(cli::cmd_pretrain((dir.path / "bad.json").string(), {}) == cli::kExitUsage);

  write_file(dir.path / "nokind.json", R"({"adapt": {"source_checkpoint": "x",
    "target": {"kind": "wat"}}})");
  CHECK(cli::cmd_adapt((dir.path / "nokind.json").string(), {}) == cli::kExitUsage);

  write_file(dir.path / "notjson.json", "{nope");
  CHECK(cli::cmd_pretrain((dir.path / "notjson.json").string(), {}) == cli::kExitUsage);

  CHECK(cli::cmd_pretrain((dir.path / "missing.json").string(), {}) == cli::kExitUsage);
}

TEST_CASE("cli: missing checkpoint is a usage-class failure") {
  TempDir dir("missing");
  json a;
  a["run_dir"] = (dir.path / "run").string();
  a["adapt"] = {{"source_checkpoint", (dir.path / "nope.fsga").string()},
                {"iterations", 1},
                {"target", {{"kind", "shapeworld"}, {"modes", {0}}, {"k", 2}}}};
  write_file(dir.path / "a.json", a.dump());
  CHECK(cli::cmd_adapt((dir.path / "a.json").string(), {}) == cli::kExitUsage);
  CHECK(cli::cmd_sample((dir.path / "nope.fsga").string(), 2, 0, (dir.path / "o.png").string()) ==
        cli::kExitUsage);
}

TEST_CASE("cli: overrides reach the config") {
  TempDir dir("override");
  const fs::path pre_dir = dir.path / "pre";
  write_file(dir.path / "pre.json", tiny_pretrain_config(pre_dir));
  REQUIRE(cli::cmd_pretrain((dir.path / "pre.json").string(), {"pretrain.steps=2"}) ==
          cli::kExitOk);
  const CheckpointBundle bundle = load_checkpoint((pre_dir / "source.fsga").string());
  CHECK(bundle.step == 2);
  // An override introducing an unknown key still fails validation.
  CHECK(cli::cmd_pretrain((dir.path / "pre.json").string(), {"pretrain.nonsense=2"}) ==
        cli::kExitUsage);
}

TEST_CASE("cli: unknown testbed scenario is a usage error") {
  TempDir dir("scenario");
  CHECK(cli::cmd_testbed("no-such-scenario", 0, (dir.path / "tb").string()) == cli::kExitUsage);
}

TEST_CASE("cli: correspond rejects latent-spec mismatches") {
  TempDir dir("mismatch");
  const fs::path pa = dir.path / "a";
  const fs::path pb = dir.path / "b";
  json cfg;
  cfg["run_dir"] = pa.string();
  cfg["pretrain"] = {{"steps", 2},
                     {"batch_size", 4},
                     {"seed", 1},
                     {"latent_dim", 16},
                     {"dataset", {{"kind", "shapeworld8"}, {"samples_per_mode", 4}}}};
  write_file(dir.path / "a.json", cfg.dump());
  cfg["run_dir"] = pb.string();
  cfg["pretrain"]["latent_dim"] = 12;
  write_file(dir.path / "b.json", cfg.dump());
  REQUIRE(cli::cmd_pretrain((dir.path / "a.json").string(), {}) == cli::kExitOk);
  REQUIRE(cli::cmd_pretrain((dir.path / "b.json").string(), {}) == cli::kExitOk);
  CHECK(cli::cmd_correspond((pa / "source.fsga").string(), (pb / "source.fsga").string(), 3, 0,
                            (dir.path / "x.png").string()) == cli::kExitUsage);
}
