#include <doctest.h>

#include <cmath>

#include "coedge/errors.hpp"
#include "coedge/perf.hpp"
#include "coedge/rng.hpp"
#include "support/fixtures.hpp"

using namespace coedge;

namespace {

Architecture make_arch(InputSpec input, std::vector<LayerSpec> layers) {
  Architecture a;
  a.input = input;
  a.layers = std::move(layers);
  return a;
}

}  // namespace

TEST_CASE("nearest_pow2_bucket") {
  CHECK(nearest_pow2_bucket(1) == 1);
  CHECK(nearest_pow2_bucket(2) == 2);
  CHECK(nearest_pow2_bucket(3) == 2);   // tie goes to the smaller bucket
  CHECK(nearest_pow2_bucket(17) == 16);
  CHECK(nearest_pow2_bucket(24) == 16);
  CHECK(nearest_pow2_bucket(25) == 32);
  CHECK(nearest_pow2_bucket(1024) == 1024);
  CHECK(nearest_pow2_bucket(1500) == 1024);
}

TEST_CASE("lut_lookup") {
  LatencyLUT lut;
  lut.add("dev-A", OpKind::Combine, "out=64", 1024, 3, 0.125);

  SUBCASE("stored value returned exactly") {
    CHECK(lut.lookup("dev-A", combine_layer(64), {1024, 3}) == 0.125);
  }
  SUBCASE("identity costs nothing regardless of the table") {
    CHECK(lut.lookup("dev-A", identity_layer(), {1024, 3}) == 0.0);
    CHECK(lut.lookup("nobody", identity_layer(), {4, 4}) == 0.0);
  }
  SUBCASE("unknown bucket raises MissingEntry") {
    CHECK_THROWS_AS(lut.lookup("dev-A", combine_layer(64), {512, 3}), MissingEntryError);
    CHECK_THROWS_AS(lut.lookup("dev-B", combine_layer(64), {1024, 3}), MissingEntryError);
  }
  SUBCASE("round trips through JSON") {
    const LatencyLUT loaded = LatencyLUT::from_json(lut.to_json());
    CHECK(loaded.lookup("dev-A", combine_layer(64), {1024, 3}) == 0.125);
    CHECK(loaded.size() == lut.size());
  }
  SUBCASE("non-positive latency rejected") {
    LatencyLUT bad;
    CHECK_THROWS(bad.add("x", OpKind::Combine, "out=8", 4, 4, 0.0));
  }
}

TEST_CASE("transfer_size") {
  SUBCASE("communicate after pooling, F=64") {
    const Architecture arch =
        make_arch({1024, 64, false}, {global_pooling_layer(PoolReducer::Max),
                                      communicate_layer(), identity_layer()});
    const ShapeTrace t = infer_shapes(arch);
    CHECK(transfer_size(arch, 1, t) == 4 * 1 * 64 + 64);  // 320
  }

  SUBCASE("(1024,3) with no pending edge use") {
    const Architecture arch =
        make_arch({1024, 3, false}, {communicate_layer(), combine_layer(64),
                                     global_pooling_layer(PoolReducer::Max)});
    const ShapeTrace t = infer_shapes(arch);
    CHECK(transfer_size(arch, 0, t) == 4ull * 1024 * 3 + 64);  // 12352
  }

  SUBCASE("minimal legal input") {
    const Architecture arch =
        make_arch({1, 1, false}, {communicate_layer(), global_pooling_layer(PoolReducer::Max)});
    const ShapeTrace t = infer_shapes(arch);
    CHECK(transfer_size(arch, 0, t) == 68);
  }

  SUBCASE("edge set crosses when the other side aggregates with it") {
    const Architecture arch = make_arch(
        {64, 3, false}, {sample_layer(5), communicate_layer(), aggregate_layer(Reducer::Max),
                         global_pooling_layer(PoolReducer::Max)});
    const ShapeTrace t = infer_shapes(arch);
    CHECK(transfer_size(arch, 1, t) == 4ull * 64 * 3 + 8ull * 64 * 5 + 64);
  }

  SUBCASE("no edge shipping when the aggregate stays on the origin side") {
    const Architecture arch = make_arch(
        {64, 3, false},
        {sample_layer(5), communicate_layer(), identity_layer(), communicate_layer(),
         aggregate_layer(Reducer::Mean), global_pooling_layer(PoolReducer::Max)});
    const ShapeTrace t = infer_shapes(arch);
    CHECK(transfer_size(arch, 1, t) == 4ull * 64 * 3 + 64);
    CHECK(transfer_size(arch, 3, t) == 4ull * 64 * 3 + 64);
  }

  SUBCASE("a sample on the far side cancels the shipping") {
    const Architecture arch = make_arch(
        {64, 3, false},
        {sample_layer(5), communicate_layer(), sample_layer(3), aggregate_layer(Reducer::Max),
         global_pooling_layer(PoolReducer::Max)});
    const ShapeTrace t = infer_shapes(arch);
    CHECK(transfer_size(arch, 1, t) == 4ull * 64 * 3 + 64);
  }
}

TEST_CASE("comm_latency") {
  SUBCASE("12352 bytes at 10 Mbps with the default 2 ms overhead") {
    CHECK(comm_latency_ms(12352, 10.0, 2.0) == doctest::Approx(11.8816).epsilon(1e-9));
  }
  SUBCASE("empty payload pays the overhead only") {
    CHECK(comm_latency_ms(0, 10.0, 2.0) == 2.0);
  }
  SUBCASE("doubling bandwidth halves the payload term") {
    const double slow = comm_latency_ms(40000, 10.0, 0.0);
    const double fast = comm_latency_ms(40000, 20.0, 0.0);
    CHECK(slow == doctest::Approx(2.0 * fast).epsilon(1e-12));
  }
}

TEST_CASE("estimate_cost") {
  const SpaceConfig space = testfx::default_space();
  const SystemConfig sys = testfx::default_system();
  const LatencyLUT lut = testfx::analytic_lut(space, sys);

  SUBCASE("single identity layer costs nothing") {
    const Architecture arch = make_arch(space.input, {identity_layer()});
    const PerfReport r = estimate_cost(arch, sys, lut);
    CHECK(r.total_latency_ms == 0.0);
    CHECK(r.comm_ms == 0.0);
  }

  SUBCASE("all-device arch equals the independent per-layer sum") {
    const Architecture arch = make_arch(
        space.input, {sample_layer(10), aggregate_layer(Reducer::Max), combine_layer(64),
                      global_pooling_layer(PoolReducer::Max)});
    const PerfReport r = estimate_cost(arch, sys, lut);

    // independent route: look the four entries up one by one
    const double expect = lut.lookup("dev", sample_layer(10), {1024, 3}) +
                          lut.lookup("dev", aggregate_layer(Reducer::Max), {1024, 3}) +
                          lut.lookup("dev", combine_layer(64), {1024, 3}) +
                          lut.lookup("dev", global_pooling_layer(PoolReducer::Max), {1024, 64});
    CHECK(r.total_latency_ms == expect);
    CHECK(r.device_compute_ms == expect);
    CHECK(r.edge_compute_ms == 0.0);
    CHECK(r.comm_ms == 0.0);
    CHECK(r.per_layer_ms.size() == 4);
  }

  SUBCASE("inserting a communicate adds exactly its comm latency (symmetric LUT)") {
    const LatencyLUT sym = testfx::symmetric_lut(space, sys);
    const Architecture base = make_arch(
        space.input, {sample_layer(10), aggregate_layer(Reducer::Max), combine_layer(64),
                      global_pooling_layer(PoolReducer::Max)});
    Architecture split = base;
    split.layers.insert(split.layers.begin() + 3, communicate_layer());

    const PerfReport r0 = estimate_cost(base, sys, sym);
    const PerfReport r1 = estimate_cost(split, sys, sym);
    const ShapeTrace t = infer_shapes(split);
    const double comm =
        comm_latency_ms(transfer_size(split, 3, t), sys.bandwidth_mbps, sys.rtt_overhead_ms);
    CHECK(r1.total_latency_ms ==
          doctest::Approx(r0.total_latency_ms + comm).epsilon(1e-12));
    CHECK(r1.comm_ms == doctest::Approx(comm));
    // compute re-partitions: the pooling layer moved to the edge column
    CHECK(r1.edge_compute_ms ==
          doctest::Approx(sym.lookup("edge", global_pooling_layer(PoolReducer::Max),
                                     {1024, 64})));
    CHECK(r1.device_compute_ms + r1.edge_compute_ms ==
          doctest::Approx(r0.device_compute_ms).epsilon(1e-12));
  }

  SUBCASE("missing entry propagates") {
    LatencyLUT tiny;
    const Architecture arch =
        make_arch(space.input, {combine_layer(64), global_pooling_layer(PoolReducer::Max)});
    CHECK_THROWS_AS(estimate_cost(arch, sys, tiny), MissingEntryError);
  }

  SUBCASE("monotone: adding a compute layer never lowers the total") {
    Rng rng(23);
    int done = 0;
    while (done < 100) {
      Architecture arch = sample_random(space, rng);
      if (!check_validity(arch).empty()) continue;
      ++done;
      const double before = estimate_cost(arch, sys, lut).total_latency_ms;
      Architecture more = arch;
      more.layers.insert(more.layers.begin(), identity_layer());
      more.layers.insert(more.layers.begin(), combine_layer(32));
      if (!check_validity(more).empty()) continue;
      const double after = estimate_cost(more, sys, lut).total_latency_ms;
      CHECK(after >= before);
    }
  }
}

TEST_CASE("estimate_energy") {
  const SpaceConfig space = testfx::default_space();
  SystemConfig sys = testfx::default_system();
  const LatencyLUT lut = testfx::analytic_lut(space, sys);

  SUBCASE("all-device arithmetic: 3 W for 100 ms is 0.3 J") {
    SystemConfig s = sys;
    s.device = {"dev", 0.0, 3.0, 0.0, 0.0};
    PerfReport r;
    r.device_compute_ms = 100.0;
    const Architecture arch = make_arch(space.input, {identity_layer()});
    CHECK(estimate_energy(arch, s, lut, r) == doctest::Approx(0.3).epsilon(1e-12));
  }

  SUBCASE("identity-only arch consumes nothing") {
    const Architecture arch = make_arch(space.input, {identity_layer(), identity_layer()});
    const PerfReport r = estimate_cost(arch, sys, lut);
    CHECK(r.energy_device_j == 0.0);
  }

  SUBCASE("extra edge compute charges only idle power") {
    PerfReport r;
    r.device_compute_ms = 10.0;
    r.edge_compute_ms = 20.0;
    const Architecture arch = make_arch(space.input, {identity_layer()});
    const double base = estimate_energy(arch, sys, lut, r);
    PerfReport r2 = r;
    r2.edge_compute_ms = 40.0;
    const double more = estimate_energy(arch, sys, lut, r2);
    CHECK(more - base == doctest::Approx(sys.device.power_idle_w * 0.020).epsilon(1e-12));
  }

  SUBCASE("tx and rx follow the transfer direction") {
    // device -> edge -> device: first communicate transmits, second receives
    const Architecture arch = make_arch(
        space.input, {identity_layer(), communicate_layer(), combine_layer(32),
                      communicate_layer(), global_pooling_layer(PoolReducer::Max)});
    const PerfReport r = estimate_cost(arch, sys, lut);
    const ShapeTrace t = infer_shapes(arch);
    const double tx_ms =
        comm_latency_ms(transfer_size(arch, 1, t), sys.bandwidth_mbps, sys.rtt_overhead_ms);
    const double rx_ms =
        comm_latency_ms(transfer_size(arch, 3, t), sys.bandwidth_mbps, sys.rtt_overhead_ms);
    const double expect = sys.device.power_run_w * r.device_compute_ms / 1000.0 +
                          sys.device.power_idle_w * r.edge_compute_ms / 1000.0 +
                          sys.device.power_tx_w * tx_ms / 1000.0 +
                          sys.device.power_rx_w * rx_ms / 1000.0;
    CHECK(r.energy_device_j == doctest::Approx(expect).epsilon(1e-12));
  }

  SUBCASE("non-negative, zero only when idle") {
    Rng rng(5);
    const SpaceConfig sp = testfx::default_space();
    int done = 0;
    while (done < 50) {
      Architecture arch = sample_random(sp, rng);
      if (!check_validity(arch).empty()) continue;
      ++done;
      const PerfReport r = estimate_cost(arch, sys, lut);
      CHECK(r.energy_device_j >= 0.0);
      if (r.total_latency_ms > 0.0) CHECK(r.energy_device_j > 0.0);
    }
  }
}

TEST_CASE("zscore_normalize") {
  SUBCASE("[1,2,3]") {
    const auto z = zscore_normalize({1.0, 2.0, 3.0});
    REQUIRE(z.size() == 3);
    CHECK(z[0] == doctest::Approx(-1.2247).epsilon(1e-4));
    CHECK(z[1] == doctest::Approx(0.0));
    CHECK(z[2] == doctest::Approx(1.2247).epsilon(1e-4));
  }
  SUBCASE("constant input maps to zeros") {
    for (double v : zscore_normalize({4.2, 4.2, 4.2, 4.2})) CHECK(v == 0.0);
  }
  SUBCASE("output has mean 0 and std 1") {
    Rng rng(9);
    std::vector<double> values;
    for (int i = 0; i < 57; ++i) values.push_back(rng.uniform(0.1, 50.0));
    const auto z = zscore_normalize(values);
    double mean = 0.0, var = 0.0;
    for (double v : z) mean += v;
    mean /= z.size();
    for (double v : z) var += (v - mean) * (v - mean);
    var /= z.size();
    CHECK(std::fabs(mean) < 1e-9);
    CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-9);
  }
}

TEST_CASE("system config JSON") {
  const SystemConfig sys = testfx::default_system();
  const SystemConfig back = system_from_json(system_to_json(sys));
  CHECK(back.device.id == sys.device.id);
  CHECK(back.edge.power_run_w == sys.edge.power_run_w);
  CHECK(back.bandwidth_mbps == sys.bandwidth_mbps);
  CHECK(back.rtt_overhead_ms == sys.rtt_overhead_ms);

  json j = system_to_json(sys);
  j["unknown"] = 1;
  CHECK_THROWS_AS(system_from_json(j), JsonSchemaError);
}
