// Copyright 2026 The mobfed Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <bit>
#include <cmath>

#include "mobfed/checkpoint.h"
#include "mobfed/client.h"
#include "mobfed/errors.h"
#include "mobfed/gradcheck.h"
#include "mobfed/wire.h"
#include "reference.h"

namespace mobfed::client {
namespace {

ClientModelConfig Toy() {
  ClientModelConfig c;
  c.d = 8;
  c.hidden = 16;
  c.heads = 2;
  c.layers = 2;
  c.ffn = 32;
  c.vocab_size = 12;
  c.window = 8;
  c.stride = 1;
  return c;
}

encoding::TokenizedSequence Sequence(std::size_t n, std::uint64_t seed, std::size_t vocab = 10) {
  encoding::TokenizedSequence s;
  s.user_id = "user";
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    // Mostly periodic, so there is something to learn.
    s.tokens.push_back(rng.Uniform() < 0.8 ? i % 5 : rng.UniformInt(vocab));
    s.time_buckets.push_back((i * 3) % 56);
    s.timestamps.push_back(1333324800 + static_cast<std::int64_t>(i) * 3600);
  }
  return s;
}

Tensor RandomTensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.span()) v = rng.Normal();
  return t;
}

TEST(ClientForward, Causal) {
  Rng rng(1);
  ClientModel m(Toy(), rng);
  Tensor e = RandomTensor({6, 8}, rng);
  Tensor base = ClientForward(e, m.net);
  for (std::size_t t = 0; t + 1 < 6; ++t) {
    Tensor p = e;
    for (std::size_t r = t + 1; r < 6; ++r) {
      for (std::size_t c = 0; c < 8; ++c) p.at(r, c) += 3.0;
    }
    Tensor h = ClientForward(p, m.net);
    for (std::size_t r = 0; r <= t; ++r) {
      for (std::size_t c = 0; c < 8; ++c) {
        EXPECT_EQ(std::bit_cast<std::uint64_t>(h.at(r, c)), std::bit_cast<std::uint64_t>(base.at(r, c)));
      }
    }
  }
}

TEST(ClientForward, TwoRowsMatchStraightLineReference) {
  Rng rng(2);
  ClientModel m(Toy(), rng);
  Tensor e = RandomTensor({2, 8}, rng);
  Tensor h = ClientForward(e, m.net);
  Tensor x = testref::Linear(e, m.net.in_proj.weight.value, m.net.in_proj.bias.value);
  for (const auto& b : m.net.blocks) x = testref::BlockForward(b, x);
  x = testref::LayerNorm(x, m.net.ln_f.gamma.value, m.net.ln_f.beta.value);
  Tensor ref = testref::Linear(x, m.net.out_proj.weight.value, m.net.out_proj.bias.value);
  ASSERT_EQ(h.shape(), (Shape{2, 8}));
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(h[i], ref[i], 1e-12);
}

TEST(ClientForward, ZeroOutputMapGivesZero) {
  Rng rng(3);
  ClientModel m(Toy(), rng);
  m.net.out_proj.weight.value.Fill(0.0);
  m.net.out_proj.bias.value.Fill(0.0);
  Tensor h = ClientForward(Tensor::Zeros({4, 8}), m.net);
  for (double v : h.span()) EXPECT_EQ(v, 0.0);
}

TEST(ClientForward, DimensionMismatch) {
  Rng rng(3);
  ClientModel m(Toy(), rng);
  EXPECT_THROW(ClientForward(Tensor::Zeros({4, 7}), m.net), DimensionError);
}

TEST(ClientModel, FullSizeShapes) {
  Rng rng(0);
  ClientModelConfig c;
  c.vocab_size = 50;
  ClientModel m(c, rng);
  EXPECT_EQ(m.net.blocks.size(), 6u);
  EXPECT_EQ(m.net.in_proj.weight.value.shape(), (Shape{256, 128}));
  EXPECT_EQ(m.net.out_proj.weight.value.shape(), (Shape{128, 256}));
  EXPECT_EQ(m.tables.phi_loc.value.shape(), (Shape{50, 128}));
  for (Parameter* p : m.Params()) EXPECT_TRUE(p->trainable) << p->name;
}

TEST(WindowLoss, MatchesPerWindowSquaredError) {
  Rng rng(4);
  ClientModel m(Toy(), rng);
  auto seq = Sequence(12, 1);
  auto windows = encoding::MakeWindows(seq.size(), 8, 2);
  Graph g;
  double loss = g.value(WindowLoss(g, m, seq, windows))[0];
  double ref = 0.0;
  for (const auto& w : windows) {
    Tensor e = WindowEmbeddings(m, seq, w);
    Tensor h = ClientForward(e, m.net);
    for (std::size_t t = 0; t + 1 < w.length; ++t) {
      for (std::size_t c = 0; c < 8; ++c) ref += (h.at(t, c) - e.at(t + 1, c)) * (h.at(t, c) - e.at(t + 1, c));
    }
  }
  EXPECT_NEAR(loss, ref, 1e-10 * std::max(1.0, ref));
}

TEST(WindowLoss, GradientPassesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(seed);
    ClientModel m(Toy(), rng);
    auto seq = Sequence(14, seed);
    auto windows = encoding::MakeWindows(seq.size(), 6, 4);
    EXPECT_LT(FiniteDifferenceCheck([&](Graph& g) { return WindowLoss(g, m, seq, windows); }, m.Params(),
                                    {1e-6, 12, seed}),
              1e-6);
  }
}

TEST(LocalTrain, LossHalvesOverTwentyEpochs) {
  ClientModelConfig c = Toy();
  c.lr = 3e-3;
  c.batch = 64;
  Rng rng(5);
  ClientModel m(c, rng);
  auto seq = Sequence(207, 2);
  auto windows = encoding::MakeWindows(seq.size(), 8, 1);
  ASSERT_EQ(windows.size(), 200u);
  Adam opt(m.Params(), {c.lr});
  Rng order(9);
  std::vector<double> losses;
  for (int e = 0; e < 20; ++e) losses.push_back(LocalTrainEpoch(m, opt, seq, windows, order));
  EXPECT_LT(losses.back(), 0.5 * losses.front());
  for (std::size_t i = 1; i < losses.size(); ++i) EXPECT_LT(losses[i], losses[i - 1]) << "epoch " << i;
}

TEST(LocalTrain, SmallClientTakesOneBatch) {
  ClientModelConfig c = Toy();
  Rng rng(6);
  ClientModel m(c, rng);
  auto seq = Sequence(17, 3);
  auto windows = encoding::MakeWindows(seq.size(), 8, 1);
  ASSERT_EQ(windows.size(), 10u);
  Adam opt(m.Params(), {c.lr});
  Rng order(1);
  LocalTrainEpoch(m, opt, seq, windows, order);
  for (const auto& s : opt.states()) EXPECT_EQ(s.step, 1u);
  EXPECT_THROW(LocalTrainEpoch(m, opt, seq, {}, order), ContractError);
}

TEST(LocalTrain, DeterministicGivenSeed) {
  auto run = [] {
    Rng rng(7);
    ClientModel m(Toy(), rng);
    auto seq = Sequence(40, 4);
    auto windows = encoding::MakeWindows(seq.size(), 8, 1);
    Adam opt(m.Params(), {1e-3});
    Rng order(2);
    LocalTrainEpoch(m, opt, seq, windows, order);
    return SerializeParams(m.Params());
  };
  EXPECT_EQ(run(), run());
}

TEST(OuterProducts, Examples) {
  auto recs = ComputeOuterProducts(Tensor::Matrix({{1, 2}, {3, 4}}));
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_TRUE(recs[0].outer.BitEqual(Tensor::Matrix({{3, 4}, {6, 8}})));

  Tensor basis = Tensor::Zeros({2, 4});
  basis.at(0, 1) = 1.0;
  basis.at(1, 3) = 1.0;
  auto b = ComputeOuterProducts(basis)[0].outer;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(b.at(i, j), (i == 1 && j == 3) ? 1.0 : 0.0);
  }
  Tensor z = Tensor::Zeros({3, 4});
  z.at(1, 0) = 5.0;
  auto zr = ComputeOuterProducts(z);
  ASSERT_EQ(zr.size(), 2u);
  for (double v : zr[0].outer.span()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(zr[1].t, 1u);
  EXPECT_THROW(ComputeOuterProducts(Tensor::Zeros({1, 4})), DimensionError);
}

TEST(Privatize, NoiselessIsExactMean) {
  Rng rng(8);
  Tensor e = RandomTensor({5, 3}, rng);
  auto recs = ComputeOuterProducts(e);
  Rng noise(1);
  ClientUpdate u = Privatize(recs, {0.0, 0.0}, noise, "c", 4);
  EXPECT_EQ(u.window_count, 4u);
  EXPECT_EQ(u.d, 3u);
  EXPECT_EQ(u.round, 4u);
  for (std::size_t i = 0; i < 9; ++i) {
    double s = 0.0;
    for (const auto& r : recs) s += r.outer[i];
    EXPECT_EQ(u.payload[i], s * (1.0 / 4.0));
  }
}

TEST(Privatize, ClipScalesByFrobeniusNorm) {
  // ‖[[3,4],[0,0]]‖_F = 5
  OuterProductRecord r{Tensor::Matrix({{3, 4}, {0, 0}}), 0};
  Rng rng(0);
  ClientUpdate u = Privatize(std::span(&r, 1), {0.0, 1.0}, rng);
  EXPECT_NEAR(u.payload[0], 0.6, 1e-15);
  EXPECT_NEAR(u.payload[1], 0.8, 1e-15);
  // Under the bound: untouched.
  OuterProductRecord small{Tensor::Matrix({{0.3, 0.4}, {0, 0}}), 0};
  ClientUpdate s = Privatize(std::span(&small, 1), {0.0, 1.0}, rng);
  EXPECT_EQ(s.payload[0], 0.3);
}

TEST(Privatize, ClipBoundHoldsExactly) {
  Rng rng(10);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t d = 2 + rng.UniformInt(10);
    Tensor e = RandomTensor({2, d}, rng);
    for (double& v : e.span()) v *= rng.Uniform(0.1, 50.0);
    double clip = rng.Uniform(0.01, 3.0);
    Rng n1(0), n2(0);
    Privatizer p(d, {0.0, clip}, n1);
    p.AddPair(std::span<const double>(e.data(), d), std::span<const double>(e.data() + d, d));
    Privatizer q(d, {0.0, clip}, n2);
    q.Add(ComputeOuterProducts(e)[0].outer);
    for (const ClientUpdate& u : {p.Finish("a", 0), q.Finish("a", 0)}) {
      double n2sum = 0.0;
      for (double v : u.payload) n2sum += v * v;
      EXPECT_LE(std::sqrt(n2sum), clip);
    }
  }
}

TEST(Privatize, AddPairMatchesAdd) {
  Rng rng(11);
  Tensor e = RandomTensor({2, 5}, rng);
  Rng n1(3), n2(3);
  Privatizer a(5, {0.1, 1.0}, n1), b(5, {0.1, 1.0}, n2);
  a.Add(ComputeOuterProducts(e)[0].outer);
  b.AddPair(std::span<const double>(e.data(), 5), std::span<const double>(e.data() + 5, 5));
  auto ua = a.Finish("x", 1), ub = b.Finish("x", 1);
  for (std::size_t i = 0; i < 25; ++i) EXPECT_NEAR(ua.payload[i], ub.payload[i], 1e-15);
}

void CheckNoiseStats(std::size_t records, double k) {
  const std::size_t d = 4, draws = 100000;
  std::vector<double> sum(d * d, 0.0), sq(d * d, 0.0);
  Rng rng(2024 + records);
  Tensor zero = Tensor::Zeros({d, d});
  for (std::size_t n = 0; n < draws; ++n) {
    Privatizer p(d, {0.1, 1.0}, rng);
    for (std::size_t r = 0; r < records; ++r) p.Add(zero);
    auto u = p.Finish("z", 0);
    ASSERT_EQ(u.window_count, records);
    for (std::size_t i = 0; i < d * d; ++i) {
      sum[i] += u.payload[i];
      sq[i] += u.payload[i] * u.payload[i];
    }
  }
  for (std::size_t i = 0; i < d * d; ++i) {
    double mean = sum[i] / draws;
    double sd = std::sqrt(sq[i] / draws - mean * mean);
    EXPECT_LT(std::abs(mean), 0.005);
    EXPECT_GE(sd, 0.099 * k);
    EXPECT_LE(sd, 0.101 * k);
  }
}

TEST(Privatize, NoiseStatisticsSingleRecord) { CheckNoiseStats(1, 1.0); }
TEST(Privatize, NoiseStatisticsAveraged) { CheckNoiseStats(4, 0.5); }

TEST(Privatize, BadConfigAndEmpty) {
  Rng rng(0);
  EXPECT_THROW(Privatizer(2, {-0.1, 1.0}, rng), ConfigError);
  Privatizer p(2, {0.1, 1.0}, rng);
  EXPECT_THROW(p.Finish("x", 0), ContractError);
  EXPECT_THROW(Privatize({}, {0.1, 1.0}, rng), ContractError);
}

TEST(Vec, RowMajorAndExactInverse) {
  Tensor m = Tensor::Matrix({{1, 2}, {3, 4}});
  auto v = Vec(m);
  EXPECT_EQ(v, (std::vector<double>{1, 2, 3, 4}));
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor r = RandomTensor({6, 6}, rng);
    EXPECT_TRUE(Unvec(Vec(r), 6).BitEqual(r));
  }
  EXPECT_THROW(Unvec(v, 3), DimensionError);
}

TEST(Vec, NoiselessRecordsAreRankOne) {
  Rng rng(13);
  ClientModel m(Toy(), rng);
  auto seq = Sequence(20, 5);
  Tensor e = WindowEmbeddings(m, seq, {0, 8});
  Rng noise(0);
  for (const auto& rec : ComputeOuterProducts(e)) {
    ClientUpdate u = Privatize(std::span(&rec, 1), {0.0, 0.0}, noise);
    Tensor o = Unvec(u.payload, 8);
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t j = i + 1; j < 8; ++j) {
        for (std::size_t k = 0; k < 8; ++k) {
          for (std::size_t l = k + 1; l < 8; ++l) {
            EXPECT_LT(std::abs(o.at(i, k) * o.at(j, l) - o.at(i, l) * o.at(j, k)), 1e-9);
          }
        }
      }
    }
  }
}

TEST(Client, ParticipateIsDeterministicAndDecodes) {
  ClientModelConfig c = Toy();
  auto seq = Sequence(30, 6);
  Client a("alice", seq, c, 77), b("alice", seq, c, 77);
  std::string ba = a.Participate(1, 5, {0.1, 1.0}, 1);
  std::string bb = b.Participate(1, 5, {0.1, 1.0}, 1);
  EXPECT_EQ(ba, bb);
  ClientUpdate u = DecodeClientUpdate(ba);
  EXPECT_EQ(u.client_id, "alice");
  EXPECT_EQ(u.round, 1u);
  EXPECT_EQ(u.d, 8);
  EXPECT_EQ(u.payload.size(), 64u);
  // One record per consecutive pair inside every window.
  EXPECT_EQ(u.window_count, a.window_count() * 7);
  // Round 2 continues from the round-1 weights with a fresh stream.
  EXPECT_NE(a.Participate(2, 5, {0.1, 1.0}, 1), ba);
  Client other("bob", seq, c, 77);
  EXPECT_NE(other.Participate(1, 5, {0.1, 1.0}, 1), ba);
}

TEST(Client, NoWindowsIsContractError) {
  Client c("x", Sequence(1, 1), Toy(), 1);
  EXPECT_EQ(c.window_count(), 0u);
  EXPECT_THROW(c.Participate(1, 0, {}, 1), ContractError);
}

TEST(Wire, RoundTripIsByteExact) {
  ClientUpdate u;
  u.client_id = "ünïcode-id";
  u.round = 7;
  u.window_count = 123;
  u.d = 3;
  u.sigma = 0.1f;
  u.clip = 1.0f;
  Rng rng(14);
  for (int i = 0; i < 9; ++i) u.payload.push_back(static_cast<float>(rng.Normal()));
  std::string bytes = EncodeClientUpdate(u);
  EXPECT_EQ(bytes.size(), 2 + u.client_id.size() + 4 + 4 + 2 + 4 + 4 + 9 * 4);
  ClientUpdate back = DecodeClientUpdate(bytes);
  EXPECT_EQ(back.client_id, u.client_id);
  EXPECT_EQ(back.round, 7u);
  EXPECT_EQ(back.window_count, 123u);
  EXPECT_EQ(back.d, 3);
  EXPECT_EQ(back.sigma, 0.1f);
  EXPECT_EQ(back.payload, u.payload);
  EXPECT_EQ(EncodeClientUpdate(back), bytes);
  // Little-endian round field right after the id.
  EXPECT_EQ(static_cast<unsigned char>(bytes[2 + u.client_id.size()]), 7);
}

TEST(Wire, Errors) {
  ClientUpdate u;
  u.client_id = "a";
  u.d = 2;
  u.payload = {1, 2, 3};
  EXPECT_THROW(EncodeClientUpdate(u), ProtocolError);
  u.payload.push_back(4);
  std::string bytes = EncodeClientUpdate(u);
  EXPECT_THROW(DecodeClientUpdate(bytes.substr(0, bytes.size() - 1)), ProtocolError);
  EXPECT_THROW(DecodeClientUpdate(bytes + "x"), ProtocolError);
  EXPECT_THROW(DecodeClientUpdate(""), ProtocolError);
}

}  // namespace
}  // namespace mobfed::client
