#include <doctest.h>

#include <png.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sparsediff/checkpoint.hpp"
#include "sparsediff/config.hpp"
#include "sparsediff/harness.hpp"
#include "sparsediff/pipeline.hpp"
#include "sparsediff/plots.hpp"

using namespace sparsediff;
namespace fs = std::filesystem;

namespace {

std::string write_tmp_config(const std::string& name, const std::string& body) {
  fs::path p = fs::temp_directory_path() / name;
  std::ofstream out(p);
  out << body;
  return p.string();
}

const char* kTinyConfig = R"({
  "system": "lambda_omega",
  "grid": {"height": 8, "width": 8, "boundary": "periodic"},
  "data": {"n_train": 1, "n_eval": 1, "n_frames": 12, "solver_dt": 0.05,
           "store_every": 2, "ic_max_mode": 3},
  "lookback": 4,
  "codebook": {"size": 4, "steps": 20, "batch_pixels": 32, "latent_dim": 4,
               "hidden_dim": 8},
  "predictor": {"steps": 10},
  "diffusion": {"n_steps": 10, "steps": 2, "batch": 1, "base_channels": 8,
                "time_embed_dim": 16, "norm_groups": 4},
  "eval": {"horizon": 3},
  "adaptation": {"mode": "never", "decode_every": 3},
  "seed": 5
})";

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(SPARSEDIFF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Minimal libpng reader for plot verification.
std::vector<unsigned char> read_png_rgb(const std::string& path, int* w, int* h) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  REQUIRE(fp != nullptr);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, fp);
  png_read_info(png, info);
  *w = static_cast<int>(png_get_image_width(png, info));
  *h = static_cast<int>(png_get_image_height(png, info));
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  std::vector<unsigned char> data(static_cast<size_t>(*w) * *h * 3);
  std::vector<png_bytep> rows(*h);
  for (int i = 0; i < *h; ++i) rows[i] = data.data() + static_cast<size_t>(i) * *w * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return data;
}

}  // namespace

TEST_CASE("config round-trips through json and files") {
  std::string path = write_tmp_config("cfg_roundtrip.json", kTinyConfig);
  config::ExperimentConfig cfg = config::load_config(path);
  CHECK(cfg.system == "lambda_omega");
  CHECK(cfg.grid.height == 8);
  CHECK(cfg.data.n_frames == 12);
  CHECK(cfg.lookback == 4);
  // defaults fill unspecified keys
  CHECK(cfg.codebook.beta_commit == 0.25);
  // per-system default domain applies when the config omits it
  CHECK(cfg.grid.domain_length_x == 20.0);

  fs::path saved = fs::temp_directory_path() / "cfg_saved.json";
  config::save_config(saved.string(), cfg);
  config::ExperimentConfig back = config::load_config(saved.string());
  CHECK(config::to_json(back) == config::to_json(cfg));
  CHECK(config::config_hash(back) == config::config_hash(cfg));
}

TEST_CASE("unknown config keys are rejected with their path") {
  std::string path = write_tmp_config(
      "cfg_unknown.json",
      R"({"system": "lambda_omega", "codebook": {"sise": 64}})");
  try {
    config::load_config(path);
    FAIL("expected ConfigError");
  } catch (const config::ConfigError& e) {
    CHECK(std::string(e.what()).find("codebook.sise") != std::string::npos);
  }
  CHECK_THROWS_AS(config::load_config("/nonexistent/cfg.json"),
                  config::ConfigError);
  std::string bad_json = write_tmp_config("cfg_bad.json", "{not json");
  CHECK_THROWS_AS(config::load_config(bad_json), config::ConfigError);
}

TEST_CASE("overrides re-type values and change the hash") {
  std::string path = write_tmp_config("cfg_override.json", kTinyConfig);
  config::ExperimentConfig cfg = config::load_config(path);
  const std::string h0 = config::config_hash(cfg);
  CHECK(h0.size() == 16);

  config::ExperimentConfig c2 = config::apply_override(cfg, "codebook.size=16");
  CHECK(c2.codebook.size == 16);
  CHECK(config::config_hash(c2) != h0);

  config::ExperimentConfig c3 = config::apply_override(cfg, "data.solver_dt=0.01");
  CHECK(c3.data.solver_dt == doctest::Approx(0.01));
  config::ExperimentConfig c4 = config::apply_override(cfg, "system=swift_hohenberg");
  CHECK(c4.system == "swift_hohenberg");

  CHECK_THROWS_AS(config::apply_override(cfg, "codebook.sise=1"),
                  config::ConfigError);
  CHECK_THROWS_AS(config::apply_override(cfg, "no_equals_sign"),
                  config::ConfigError);
}

TEST_CASE("checkpoints round-trip and refuse mismatches") {
  Rng rng(3);
  Tensor w1({3, 4}), w2({5});
  for (int64_t i = 0; i < 12; ++i) w1.vec()[i] = rng.normal();
  for (int64_t i = 0; i < 5; ++i) w2.vec()[i] = rng.normal();
  std::vector<ad::Var> params = {ad::param(w1), ad::param(w2)};

  fs::path path = fs::temp_directory_path() / "ckpt_roundtrip.ckpt";
  checkpoint::CheckpointMeta meta;
  meta.module_id = "predictor";
  meta.config_hash = "abc123";
  meta.extra["final_loss"] = 0.5;
  checkpoint::save_checkpoint(path.string(), meta, params);
  CHECK(checkpoint::checkpoint_exists(path.string()));

  std::vector<ad::Var> fresh = {ad::param(Tensor({3, 4})), ad::param(Tensor({5}))};
  checkpoint::CheckpointMeta loaded =
      checkpoint::load_checkpoint(path.string(), "predictor", "abc123", fresh);
  CHECK(loaded.extra.at("final_loss") == 0.5);
  for (int64_t i = 0; i < 12; ++i)
    CHECK(fresh[0]->value.vec()[i] ==
          static_cast<double>(static_cast<float>(w1.vec()[i])));

  CHECK_THROWS_AS(
      checkpoint::load_checkpoint(path.string(), "codebook", "abc123", fresh),
      checkpoint::CheckpointError);
  CHECK_THROWS_AS(
      checkpoint::load_checkpoint(path.string(), "predictor", "zzz", fresh),
      checkpoint::CheckpointError);
  std::vector<ad::Var> wrong_shape = {ad::param(Tensor({4, 3})), ad::param(Tensor({5}))};
  CHECK_THROWS_AS(
      checkpoint::load_checkpoint(path.string(), "predictor", "abc123", wrong_shape),
      checkpoint::CheckpointError);
  CHECK_FALSE(checkpoint::checkpoint_exists("/nonexistent/x.ckpt"));
  fs::remove(path);
}

TEST_CASE("seed streams are independent and stable") {
  CHECK(pipeline::module_seed(1, "data") != pipeline::module_seed(1, "codebook"));
  CHECK(pipeline::module_seed(1, "data") != pipeline::module_seed(2, "data"));
  CHECK(pipeline::module_seed(7, "diffusion") ==
        pipeline::module_seed(7, "diffusion"));

  Rng a = Rng::stream(5, "alpha");
  Rng b = Rng::stream(5, "beta");
  CHECK(a.next_u64() != b.next_u64());
  Rng a2 = Rng::stream(5, "alpha");
  CHECK(Rng::stream(5, "alpha").next_u64() == a2.next_u64());
}

TEST_CASE("dataset generation is byte-identical across runs") {
  std::string path = write_tmp_config("cfg_gen.json", kTinyConfig);
  config::ExperimentConfig cfg = config::load_config(path);
  fs::path root1 = fs::temp_directory_path() / "pl_gen_a";
  fs::path root2 = fs::temp_directory_path() / "pl_gen_b";
  fs::remove_all(root1);
  fs::remove_all(root2);

  pipeline::Paths p1 = pipeline::make_paths(cfg, root1.string());
  pipeline::Paths p2 = pipeline::make_paths(cfg, root2.string());
  pipeline::generate(cfg, p1);
  pipeline::generate(cfg, p2);

  for (const char* split : {"train", "eval"}) {
    const std::string f1 = p1.stage("dataset") + "/" + split + "/traj_0000.bin";
    const std::string f2 = p2.stage("dataset") + "/" + split + "/traj_0000.bin";
    CHECK(slurp(f1) == slurp(f2));
  }

  // idempotence: rerunning leaves the artifact untouched
  const std::string marker = p1.stage("dataset") + "/train/traj_0000.bin";
  const auto before = fs::last_write_time(marker);
  pipeline::generate(cfg, p1);
  CHECK(fs::last_write_time(marker) == before);

  fs::remove_all(root1);
  fs::remove_all(root2);
}

TEST_CASE("stages report their missing dependencies by command") {
  std::string path = write_tmp_config("cfg_dep.json", kTinyConfig);
  config::ExperimentConfig cfg = config::load_config(path);
  fs::path root = fs::temp_directory_path() / "pl_missing";
  fs::remove_all(root);
  pipeline::Paths p = pipeline::make_paths(cfg, root.string());

  try {
    pipeline::train_codebook(cfg, p);
    FAIL("expected MissingDependency");
  } catch (const pipeline::MissingDependency& e) {
    CHECK(e.required_command == "generate");
    CHECK(std::string(e.what()).find("generate") != std::string::npos);
  }

  pipeline::generate(cfg, p);
  pipeline::train_codebook(cfg, p);
  pipeline::train_predictor(cfg, p);
  try {
    pipeline::rollout(cfg, p);  // denoiser checkpoint still missing
    FAIL("expected MissingDependency");
  } catch (const pipeline::MissingDependency& e) {
    CHECK(e.required_command == "train-diffusion");
  }
  fs::remove_all(root);
}

TEST_CASE("cli exit codes: success, config error, missing dependency") {
  std::string cfg_path = write_tmp_config("cfg_cli.json", kTinyConfig);
  fs::path root = fs::temp_directory_path() / "pl_cli";
  fs::remove_all(root);
  const std::string base = "--config " + cfg_path + " --out " + root.string();

  CHECK(run_cli("generate " + base) == 0);
  CHECK(run_cli("rollout " + base) == 3);     // models not trained yet
  CHECK(run_cli("generate --config /nonexistent.json") == 2);
  std::string bad = write_tmp_config("cfg_cli_bad.json",
                                     R"({"system": "warp_drive"})");
  CHECK(run_cli("generate --config " + bad) == 2);
  CHECK(run_cli("generate " + base + " --override data.n_frames=oops") == 2);
  CHECK(run_cli("frobnicate " + base) != 0);
  fs::remove_all(root);
}

TEST_CASE("harness csv format is stable and reads back") {
  std::vector<harness::Row> rows = {
      {"lambda_omega", "adaptive", 40, 1, 0, 0.0123456789, 0.987654321},
      {"lambda_omega", "never", 40, 2, 49, 0.2, 0.5},
  };
  fs::path path = fs::temp_directory_path() / "harness_rows.csv";
  harness::write_csv(path.string(), rows);

  std::string text = slurp(path.string());
  CHECK(text.rfind("system,mode,probes,seed,step,rmse,ssim\n", 0) == 0);

  std::vector<harness::Row> back = harness::read_csv(path.string());
  REQUIRE(back.size() == 2);
  CHECK(back[0].system == "lambda_omega");
  CHECK(back[0].mode == "adaptive");
  CHECK(back[0].probes == 40);
  CHECK(back[1].seed == 2);
  CHECK(back[1].step == 49);
  CHECK(back[0].rmse == doctest::Approx(0.0123456789).epsilon(1e-9));

  // byte-stable: rewriting the same rows produces identical files
  fs::path again = fs::temp_directory_path() / "harness_rows2.csv";
  harness::write_csv(again.string(), rows);
  CHECK(slurp(path.string()) == slurp(again.string()));
  fs::remove(path);
  fs::remove(again);
}

TEST_CASE("plot geometry maps data points onto painted pixels") {
  auto [lo, hi] = plots::axis_range({0.0, 1.0});
  CHECK(lo == doctest::Approx(-0.05));
  CHECK(hi == doctest::Approx(1.05));
  auto [dlo, dhi] = plots::axis_range({3.0, 3.0});
  CHECK(dlo < 3.0);
  CHECK(dhi > 3.0);

  plots::Series s;
  s.label = "series";
  s.x = {0.0, 1.0, 2.0, 3.0};
  s.y = {0.0, 1.0, 0.5, 2.0};
  fs::path path = fs::temp_directory_path() / "plot_check.png";
  plots::line_plot(path.string(), {s});

  int w = 0, h = 0;
  std::vector<unsigned char> img = read_png_rgb(path.string(), &w, &h);
  REQUIRE(w == plots::kWidth);
  REQUIRE(h == plots::kHeight);

  auto [xlo, xhi] = plots::axis_range(s.x);
  auto [ylo, yhi] = plots::axis_range(s.y);
  plots::Rgb c = plots::palette(0);
  for (size_t i = 0; i < s.x.size(); ++i) {
    auto [px, py] = plots::map_point(s.x[i], s.y[i], xlo, xhi, ylo, yhi);
    REQUIRE(px >= 0);
    REQUIRE(py >= 0);
    // the marker paints a block around the point in the series color
    bool found = false;
    for (int dy = -3; dy <= 3 && !found; ++dy)
      for (int dx = -3; dx <= 3 && !found; ++dx) {
        const int qx = px + dx, qy = py + dy;
        if (qx < 0 || qx >= w || qy < 0 || qy >= h) continue;
        const size_t at = (static_cast<size_t>(qy) * w + qx) * 3;
        if (img[at] == c.r && img[at + 1] == c.g && img[at + 2] == c.b)
          found = true;
      }
    CHECK(found);
  }
  fs::remove(path);
}
