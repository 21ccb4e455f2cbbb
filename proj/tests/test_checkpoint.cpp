#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "vdmask/checkpoint.hpp"
#include "vdmask/jsonconv.hpp"

using namespace vdm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("vdmask_ckpt_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("save -> load -> save is byte-identical") {
  TempDir tmp;
  ViTConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  auto params = init_vit_params<float>(cfg, Rng(3));
  auto p1 = (tmp.path / "a.ckpt").string();
  auto p2 = (tmp.path / "b.ckpt").string();
  save_vit_checkpoint(p1, params, cfg);

  auto [loaded, cfg2] = load_vit_checkpoint(p1);
  CHECK(cfg2.d_model == 16);
  save_vit_checkpoint(p2, loaded, cfg2);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("reload reproduces logits bit-exactly") {
  TempDir tmp;
  ViTConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  auto params = init_vit_params<float>(cfg, Rng(5));
  params.set_requires_grad(false);
  Rng rng(6);
  std::vector<float> img(static_cast<std::size_t>(48) * 48 * 3);
  for (auto& v : img) v = static_cast<float>(rng.uniform(-1, 1));
  auto before = vit_forward(img, params, cfg).logits.values();

  auto path = (tmp.path / "vit.ckpt").string();
  save_vit_checkpoint(path, params, cfg);
  auto [loaded, cfg2] = load_vit_checkpoint(path);
  auto after = vit_forward(img, loaded, cfg2).logits.values();
  CHECK(before == after);
}

TEST_CASE("gate stack checkpoints carry hc params and round-trip") {
  TempDir tmp;
  ViTConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  HCParams hc;
  hc.tau = 0.33;
  auto stack = init_gate_stack<float>(cfg, 12.0, 1.5, hc, Rng(7));
  auto p1 = (tmp.path / "g1.ckpt").string();
  auto p2 = (tmp.path / "g2.ckpt").string();
  save_gates_checkpoint(p1, stack, cfg);
  auto [loaded, cfg2] = load_gates_checkpoint(p1);
  CHECK(loaded.hc.tau == doctest::Approx(0.33));
  CHECK(loaded.alpha.item() == 12.0f);
  CHECK(loaded.beta.item() == 1.5f);
  save_gates_checkpoint(p2, loaded, cfg2);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("corrupted magic and non-tiling manifests are rejected") {
  TempDir tmp;
  auto path = (tmp.path / "x.ckpt").string();
  save_checkpoint(path, nlohmann::json{{"kind", "test"}},
                  {{"a", Tensor::from({2}, {1, 2})},
                   {"b", Tensor::from({3}, {3, 4, 5})}});
  auto ok = load_checkpoint(path);
  CHECK(ok.tensors.size() == 2);
  CHECK(ok.find("b").values() == std::vector<float>{3, 4, 5});
  CHECK_THROWS_AS(ok.find("missing"), ParseError);

  auto bytes = slurp(path);
  {
    std::string bad = bytes;
    bad[0] = 'X';
    std::ofstream out(path, std::ios::binary);
    out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);

  {
    // rewrite with a gap in the manifest offsets
    nlohmann::json header{
        {"format_version", 1},
        {"config", {{"kind", "test"}}},
        {"manifest",
         {{{"name", "a"}, {"shape", {2}}, {"offset", 0}, {"nbytes", 8}},
          {{"name", "b"}, {"shape", {1}}, {"offset", 12}, {"nbytes", 4}}}}};
    std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary);
    out.write("VDMK1", 5);
    std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::vector<float> payload = {1, 2, 3, 4};
    out.write(reinterpret_cast<const char*>(payload.data()), 16);
  }
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
}
