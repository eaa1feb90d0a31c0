#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "depthfill/net.hpp"
#include "depthfill/params_io.hpp"
#include "depthfill/rng.hpp"
#include "test_util.hpp"

using namespace depthfill;

namespace {

NetConfig tiny_config() {
  NetConfig cfg;
  cfg.hidden = 8;
  cfg.dense_layers = 2;
  cfg.growth = 4;
  cfg.levels = 2;
  cfg.height = 16;
  cfg.width = 24;
  return cfg;
}

// Parameter count by independent shape enumeration: conv = cout*cin*9 + cout,
// BN contributes 2c trainable (gamma, beta).
int64_t enumerate_trainable(const NetConfig& cfg) {
  auto conv = [](int cin, int cout) { return static_cast<int64_t>(cout) * cin * 9 + cout; };
  auto conv_bn = [&](int cin, int cout) { return conv(cin, cout) + 2 * cout; };
  auto dense = [&](int cin) {
    int64_t total = 0;
    for (int i = 1; i <= cfg.dense_layers; ++i)
      total += conv_bn(cin + (i - 1) * cfg.growth, cfg.growth);
    return total;
  };
  auto cdc = [&](int cin, int cout) {
    return conv_bn(cin, cfg.hidden) + dense(cfg.hidden) +
           conv_bn(cfg.hidden + cfg.dense_layers * cfg.growth, cout);
  };
  int64_t total = conv_bn(4, cfg.hidden);  // stem
  for (int l = 0; l < cfg.levels; ++l) total += cdc(cfg.hidden + 1, cfg.hidden);
  total += cdc(cfg.hidden + 1, cfg.hidden);  // bottleneck
  for (int l = 0; l < cfg.levels; ++l)
    total += cdc(cfg.hidden + 1, 4 * cfg.hidden) + conv_bn(2 * cfg.hidden, cfg.hidden);
  total += conv(cfg.hidden, 1);  // head
  return total;
}

template <typename T>
Tensor<T> random_input(Shape shape, uint64_t seed, double lo, double hi, bool rg = false) {
  Rng rng(seed);
  return testutil::random_tensor<T>(std::move(shape), rng, rg, lo, hi);
}

}  // namespace

TEST_CASE("parameter count matches the shape enumeration and the frozen value") {
  NetConfig paper;  // hidden 64, L 5, k 12, levels 4
  paper.height = 16 * 4;
  paper.width = 16 * 4;
  auto params = build_net<float>(paper, 1);
  CHECK(params.trainable_numel() == enumerate_trainable(paper));
  // golden number for the default channel plan (hidden 64, L 5, k 12, levels 4)
  CHECK(params.trainable_numel() == 2570677);

  auto tiny = build_net<float>(tiny_config(), 1);
  CHECK(tiny.trainable_numel() == enumerate_trainable(tiny_config()));
}

TEST_CASE("build is deterministic per seed") {
  const auto cfg = tiny_config();
  auto a = build_net<float>(cfg, 42);
  auto b = build_net<float>(cfg, 42);
  auto c = build_net<float>(cfg, 43);
  REQUIRE(a.size() == b.size());
  bool any_diff_c = false;
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a.entries()[i].first == b.entries()[i].first);
    const auto& ta = a.entries()[i].second;
    const auto& tb = b.entries()[i].second;
    REQUIRE(ta.numel() == tb.numel());
    for (int64_t j = 0; j < ta.numel(); ++j)
      CHECK(ta.values()[static_cast<size_t>(j)] == tb.values()[static_cast<size_t>(j)]);
    const auto& tc = c.entries()[i].second;
    for (int64_t j = 0; j < ta.numel(); ++j)
      if (ta.values()[static_cast<size_t>(j)] != tc.values()[static_cast<size_t>(j)])
        any_diff_c = true;
  }
  CHECK(any_diff_c);
}

TEST_CASE("build rejects indivisible input dims") {
  NetConfig cfg = tiny_config();
  cfg.height = 18;  // not divisible by 2^2
  CHECK_THROWS_AS(build_net<float>(cfg, 1), std::invalid_argument);
}

TEST_CASE("dense_block: L=0 identity, paper channel plan, gradients") {
  // hidden 64, L 5, k 12 at one level: dense output is 64 + 60 = 124 channels
  NetConfig plan;
  plan.hidden = 64;
  plan.levels = 1;
  plan.height = plan.width = 8;
  auto params = build_net<float>(plan, 3);
  auto x = random_input<float>({1, 64, 8, 8}, 5, -1, 1);
  auto y = dense_block(params, "enc1.dense", x, plan.dense_layers, plan.growth, NetMode::Train);
  CHECK(y.shape() == Shape{1, 124, 8, 8});

  auto id = dense_block(params, "enc1.dense", x, 0, plan.growth, NetMode::Train);
  CHECK(id.values().data() != nullptr);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(id.values()[static_cast<size_t>(i)] == x.values()[static_cast<size_t>(i)]);

  // finite differences through a small dense block (64-bit)
  NetConfig small = tiny_config();
  auto dparams = build_net<double>(small, 7);
  auto dx = random_input<double>({1, small.hidden, 4, 4}, 11, -1, 1, true);
  Rng wrng(13);
  auto wsum = testutil::random_tensor<double>({1, small.hidden + small.dense_layers * small.growth, 4, 4}, wrng);
  auto loss_fn = [&] {
    return sum(mul(dense_block(dparams, "enc1.dense", dx, small.dense_layers, small.growth,
                               NetMode::Train),
                   wsum));
  };
  std::vector<TensorD> leaves = {dx, dparams.get("enc1.dense.l1.conv.weight"),
                                 dparams.get("enc1.dense.l2.bn.gamma")};
  CHECK(testutil::grad_check(loss_fn, leaves, 1e-4, 24, 17) < 1e-5);
}

TEST_CASE("encoder/bottleneck/decoder block shapes") {
  const auto cfg = tiny_config();
  auto params = build_net<float>(cfg, 9);
  auto x = random_input<float>({2, cfg.hidden, 16, 24}, 1, -1, 1);
  auto depth = random_input<float>({2, 1, 16, 24}, 2, 0, 2);

  auto [skip, down] = encoder_block(params, "enc1", x, depth, cfg, NetMode::Train);
  CHECK(skip.shape() == Shape{2, cfg.hidden, 16, 24});
  CHECK(down.shape() == Shape{2, cfg.hidden, 8, 12});

  auto depth2 = avg_pool2(depth);
  auto mid = bottleneck_block(params, "enc2", down, depth2, cfg, NetMode::Train);
  CHECK(mid.shape() == Shape{2, cfg.hidden, 8, 12});

  auto up = decoder_block(params, "dec1", mid, skip, depth2, cfg, NetMode::Train);
  CHECK(up.shape() == Shape{2, cfg.hidden, 16, 24});

  // skip dims must be exactly twice the input
  CHECK_THROWS_AS(decoder_block(params, "dec1", mid, mid, depth2, cfg, NetMode::Train),
                  std::invalid_argument);
}

TEST_CASE("every block is sensitive to its injected depth plane") {
  const auto cfg = tiny_config();
  auto params = build_net<float>(cfg, 21);
  auto x = random_input<float>({1, cfg.hidden, 8, 12}, 31, -1, 1);
  auto depth = random_input<float>({1, 1, 8, 12}, 32, 0.5, 2.0);
  auto zeros = Tensor<float>::zeros({1, 1, 8, 12});

  auto differs = [](const Tensor<float>& a, const Tensor<float>& b) {
    for (int64_t i = 0; i < a.numel(); ++i)
      if (a.values()[static_cast<size_t>(i)] != b.values()[static_cast<size_t>(i)]) return true;
    return false;
  };

  auto enc_a = encoder_block(params, "enc1", x, depth, cfg, NetMode::Eval).first;
  auto enc_b = encoder_block(params, "enc1", x, zeros, cfg, NetMode::Eval).first;
  CHECK(differs(enc_a, enc_b));

  auto mid_a = bottleneck_block(params, "mid", x, depth, cfg, NetMode::Eval);
  auto mid_b = bottleneck_block(params, "mid", x, zeros, cfg, NetMode::Eval);
  CHECK(differs(mid_a, mid_b));

  auto skip = random_input<float>({1, cfg.hidden, 16, 24}, 33, -1, 1);
  auto dec_a = decoder_block(params, "dec1", x, skip, depth, cfg, NetMode::Eval);
  auto dec_b = decoder_block(params, "dec1", x, skip, zeros, cfg, NetMode::Eval);
  CHECK(differs(dec_a, dec_b));

  // full forward: zeroing the depth input changes the output
  auto rgb = random_input<float>({1, 3, 16, 24}, 34, 0, 1);
  auto d_full = random_input<float>({1, 1, 16, 24}, 35, 0.4, 1.4);
  auto out_a = net_forward(params, cfg, rgb, d_full, NetMode::Eval);
  auto out_b = net_forward(params, cfg, rgb, Tensor<float>::zeros({1, 1, 16, 24}), NetMode::Eval);
  CHECK(differs(out_a, out_b));
}

TEST_CASE("forward output dims equal input dims, including 320x240") {
  NetConfig cfg;
  cfg.hidden = 8;
  cfg.dense_layers = 1;
  cfg.growth = 4;
  cfg.levels = 4;
  cfg.height = 240;
  cfg.width = 320;
  auto params = build_net<float>(cfg, 5);
  auto rgb = random_input<float>({1, 3, 240, 320}, 1, 0, 1);
  auto depth = random_input<float>({1, 1, 240, 320}, 2, 0, 2);
  auto out = net_forward(params, cfg, rgb, depth, NetMode::Eval);
  CHECK(out.shape() == Shape{1, 1, 240, 320});

  // wrong dims are rejected at entry
  auto bad = random_input<float>({1, 3, 120, 320}, 3, 0, 1);
  auto bad_d = random_input<float>({1, 1, 120, 320}, 4, 0, 2);
  CHECK_THROWS_AS(net_forward(params, cfg, bad, bad_d, NetMode::Eval), std::invalid_argument);
}

TEST_CASE("levels=1 degenerate config builds and runs") {
  NetConfig cfg;
  cfg.hidden = 6;
  cfg.dense_layers = 1;
  cfg.growth = 3;
  cfg.levels = 1;
  cfg.height = 8;
  cfg.width = 8;
  auto params = build_net<float>(cfg, 2);
  auto rgb = random_input<float>({1, 3, 8, 8}, 1, 0, 1);
  auto depth = random_input<float>({1, 1, 8, 8}, 2, 0, 2);
  auto out = net_forward(params, cfg, rgb, depth, NetMode::Train);
  CHECK(out.shape() == Shape{1, 1, 8, 8});
}

TEST_CASE("eval-mode forward duplicates under batch duplication, bit-exact") {
  const auto cfg = tiny_config();
  auto params = build_net<float>(cfg, 77);
  auto rgb1 = random_input<float>({1, 3, 16, 24}, 41, 0, 1);
  auto d1 = random_input<float>({1, 1, 16, 24}, 42, 0.3, 1.5);

  std::vector<float> rgb2_data(rgb1.values().begin(), rgb1.values().end());
  rgb2_data.insert(rgb2_data.end(), rgb1.values().begin(), rgb1.values().end());
  std::vector<float> d2_data(d1.values().begin(), d1.values().end());
  d2_data.insert(d2_data.end(), d1.values().begin(), d1.values().end());
  auto rgb2 = Tensor<float>::from_vector({2, 3, 16, 24}, std::move(rgb2_data));
  auto d2 = Tensor<float>::from_vector({2, 1, 16, 24}, std::move(d2_data));

  auto out1 = net_forward(params, cfg, rgb1, d1, NetMode::Eval);
  auto out2 = net_forward(params, cfg, rgb2, d2, NetMode::Eval);
  const size_t plane = 16 * 24;
  for (size_t i = 0; i < plane; ++i) {
    CHECK(out2.values()[i] == out1.values()[i]);
    CHECK(out2.values()[plane + i] == out1.values()[i]);
  }

  // pure function: repeated eval forward is bit-identical
  auto out1b = net_forward(params, cfg, rgb1, d1, NetMode::Eval);
  for (size_t i = 0; i < plane; ++i) CHECK(out1b.values()[i] == out1.values()[i]);
}

TEST_CASE("full-network gradient check (64-bit, sampled coordinates)") {
  NetConfig cfg;
  cfg.hidden = 8;
  cfg.dense_layers = 2;
  cfg.growth = 4;
  cfg.levels = 4;
  cfg.height = 32;
  cfg.width = 32;
  auto params = build_net<double>(cfg, 123);
  auto rgb = random_input<double>({1, 3, 32, 32}, 51, 0, 1, true);
  auto depth = random_input<double>({1, 1, 32, 32}, 52, 0.4, 1.4, true);
  Rng wrng(53);
  auto wsum = testutil::random_tensor<double>({1, 1, 32, 32}, wrng);
  auto loss_fn = [&] {
    return sum(mul(net_forward(params, cfg, rgb, depth, NetMode::Train), wsum));
  };
  std::vector<TensorD> leaves = {rgb,
                                 depth,
                                 params.get("stem.conv.weight"),
                                 params.get("enc2.dense.l1.conv.weight"),
                                 params.get("mid.out.bn.gamma"),
                                 params.get("dec3.in.conv.bias"),
                                 params.get("dec1.fuse.conv.weight"),
                                 params.get("head.conv.weight")};
  CHECK(testutil::grad_check(loss_fn, leaves, 1e-6, 6, 99) < 1e-4);
}

TEST_CASE("parameter container round trip is bit-exact") {
  const auto cfg = tiny_config();
  auto params = build_net<float>(cfg, 321);
  const std::string path = (std::filesystem::temp_directory_path() / "df_params.bin").string();
  save_params(params, path);
  auto loaded = load_params(path);
  REQUIRE(loaded.size() == params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    CHECK(loaded.entries()[i].first == params.entries()[i].first);
    const auto& a = params.entries()[i].second;
    const auto& b = loaded.entries()[i].second;
    CHECK(a.shape() == b.shape());
    CHECK(a.requires_grad() == b.requires_grad());
    for (int64_t j = 0; j < a.numel(); ++j)
      CHECK(a.values()[static_cast<size_t>(j)] == b.values()[static_cast<size_t>(j)]);
  }
  std::remove(path.c_str());
}
