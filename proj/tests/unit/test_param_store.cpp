// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <sstream>

#include "gfolds/errors.hpp"
#include "gfolds/ops.hpp"
#include "gfolds/optim.hpp"
#include "gfolds/param_store.hpp"
#include "gfolds/rng.hpp"

using namespace gfolds;

namespace {

ParamStore<float> sample_store() {
  ParamStore<float> p;
  p.add("w", {2, 3}, {1.5f, -0.0f, std::numeric_limits<float>::denorm_min(), 3e38f, -7.25f,
                      std::numeric_limits<float>::quiet_NaN()});
  p.add("b", {3}, {0.1f, 0.2f, 0.3f});
  p.add("s", {}, {42.0f});
  return p;
}

std::string serialize(const ParamStore<float>& p) {
  std::ostringstream out(std::ios::binary);
  ContainerWriter w(out);
  write_params(p, w);
  return out.str();
}

}  // namespace

TEST_CASE("container round trip is bitwise") {
  const auto p = sample_store();
  std::istringstream in(serialize(p), std::ios::binary);
  const auto records = read_container(in);
  REQUIRE(records.size() == 3);
  for (const auto& r : records) {
    const auto& t = p.get(r.name);
    CHECK(r.shape == t.shape());
    REQUIRE(r.data.size() == t.numel());
    for (std::size_t i = 0; i < r.data.size(); ++i) {
      CHECK(std::bit_cast<std::uint32_t>(r.data[i]) == std::bit_cast<std::uint32_t>(t.data()[i]));
    }
  }
}

TEST_CASE("container layout is little-endian with GFLD magic") {
  ParamStore<float> p;
  p.add("ab", {1}, {1.0f});
  const std::string bytes = serialize(p);
  REQUIRE(bytes.size() == 4 + 4 + 4 + 2 + 4 + 8 + 4);
  CHECK(bytes.substr(0, 4) == "GFLD");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  CHECK(bytes[5] == 0);
  CHECK(static_cast<unsigned char>(bytes[8]) == 2);
  CHECK(bytes.substr(12, 2) == "ab");
  CHECK(static_cast<unsigned char>(bytes[14]) == 1);
  CHECK(static_cast<unsigned char>(bytes[18]) == 1);
  // 1.0f = 0x3f800000
  CHECK(static_cast<unsigned char>(bytes[29]) == 0x3f);
  CHECK(static_cast<unsigned char>(bytes[28]) == 0x80);
}

TEST_CASE("container rejects bad magic, version and truncation") {
  const std::string good = serialize(sample_store());
  {
    std::string bad = good;
    bad[0] = 'X';
    std::istringstream in(bad, std::ios::binary);
    CHECK_THROWS_AS(read_container(in), FormatError);
  }
  {
    std::string bad = good;
    bad[4] = 2;
    std::istringstream in(bad, std::ios::binary);
    CHECK_THROWS_AS(read_container(in), FormatError);
  }
  for (std::size_t cut : {good.size() - 1, good.size() - 5, std::size_t{10}, std::size_t{6}}) {
    std::istringstream in(good.substr(0, cut), std::ios::binary);
    CHECK_THROWS_AS(read_container(in), FormatError);
  }
  std::istringstream header_only(good.substr(0, 8), std::ios::binary);
  CHECK(read_container(header_only).empty());
}

TEST_CASE("param store naming, trainability and checksum") {
  auto p = sample_store();
  CHECK_THROWS_AS(p.add("w", {1}, {0.0f}), ConfigError);
  CHECK_THROWS_AS(p.get("missing"), ConfigError);
  CHECK(p.names() == std::vector<std::string>{"w", "b", "s"});
  CHECK(p.num_elements() == 10);
  p.set_trainable("b", false);
  p.zero_grad();
  CHECK(p.get("w").has_grad());
  CHECK_FALSE(p.get("b").has_grad());

  const auto c1 = checksum(p);
  auto q = p.clone();
  CHECK(checksum(q) == c1);
  q.get("b").mutable_data()[1] = 0.2000001f;
  CHECK(checksum(q) != c1);
}

TEST_CASE("adamw: zero gradient and zero decay is a bitwise no-op") {
  ParamStore<float> p;
  Rng rng(1);
  std::vector<float> v(17);
  for (auto& x : v) {
    x = static_cast<float>(rng.normal());
  }
  p.add("x", {17}, v);
  AdamW<float> opt({0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 5; ++i) {
    p.zero_grad();
    opt.step(p, 1e-3);
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(std::bit_cast<std::uint32_t>(p.get("x").data()[i]) == std::bit_cast<std::uint32_t>(v[i]));
  }
}

TEST_CASE("adamw: descent direction and missing gradient") {
  ParamStore<float> p;
  p.add("x", {1}, {1.0f});
  p.get("x").mutable_grad()[0] = 1.0f;
  AdamW<float> opt;
  opt.step(p, 0.1);
  CHECK(p.get("x").data()[0] < 1.0f);
  CHECK(opt.step_count() == 1);

  p.get("x").clear_grad();
  CHECK_THROWS_AS(opt.step(p, 0.1), IntegrityError);
  p.set_trainable("x", false);
  CHECK_NOTHROW(opt.step(p, 0.1));
  CHECK(opt.step_count() == 2);
}

TEST_CASE("adamw matches a reference trajectory") {
  // Reference produced by an independent AdamW implementation in 64-bit.
  const double want[5][3] = {
      {0.98900000033333335, -1.998, 0.4895000001},
      {0.9780110006663334, -1.9885606328164354, 0.47968870382971612},
      {0.96703298999900045, -1.9782863465385132, 0.47047742997216146},
      {0.95606595734233479, -1.9675931290583824, 0.46179456410754238},
      {0.94510989171832582, -1.9566104285943133, 0.45358393093605259}};
  ParamStore<double> p;
  p.add("p", {3}, {1.0, -2.0, 0.5});
  AdamW<double> opt({0.9, 0.999, 1e-8, 0.1});
  for (int t = 0; t < 5; ++t) {
    auto g = p.get("p").mutable_grad();
    g[0] = 0.3;
    g[1] = -0.1 * t;
    g[2] = 1.0 / (t + 1);
    opt.step(p, 1e-2);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(p.get("p").data()[i] == doctest::Approx(want[t][i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("adamw converges on a scalar quadratic") {
  ParamStore<double> p;
  p.add("q", {1}, {0.0});
  AdamW<double> opt({0.9, 0.999, 1e-8, 0.0});
  for (int t = 0; t < 200; ++t) {
    p.zero_grad();
    auto q = p.get("q");
    auto d = ops::sub(q, Tensor64::full({1}, 3.0));
    ops::sum(ops::mul(d, d)).backward();
    opt.step(p, 0.1);
  }
  // The independent reference lands at 3.0000530297387056.
  CHECK(p.get("q").data()[0] == doctest::Approx(3.0000530297387056).epsilon(1e-10));
  CHECK(std::abs(p.get("q").data()[0] - 3.0) < 1e-2);
}

TEST_CASE("rng streams are deterministic and splits are distinct") {
  Rng a(123);
  Rng b(123);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  const Rng root(9);
  std::set<std::uint64_t> firsts;
  for (std::uint64_t tag = 0; tag < 64; ++tag) {
    firsts.insert(root.split(tag).next_u64());
  }
  CHECK(firsts.size() == 64);
  CHECK(root.split("mask").key() != root.split("shuffle").key());

  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(7) < 7);
    const double t = r.truncated_normal(0.02);
    CHECK(std::abs(t) <= 0.04);
  }
  std::vector<int> items(20);
  for (int i = 0; i < 20; ++i) {
    items[static_cast<std::size_t>(i)] = i;
  }
  r.shuffle(std::span(items));
  std::set<int> seen(items.begin(), items.end());
  CHECK(seen.size() == 20);
}
