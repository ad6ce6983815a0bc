#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dsgd/engine.hpp"
#include "dsgd/errors.hpp"
#include "dsgd/problems.hpp"
#include "dsgd/topology.hpp"

using namespace dsgd;

namespace {

RunSpec quadratic_run(Algorithm alg, int dim, int nodes, const Problem* p, long long k,
                      double gamma, std::uint64_t seed) {
  RunSpec spec;
  spec.algorithm = alg;
  spec.topology = WeightMatrix::ring(nodes);
  spec.problem = p;
  spec.iterations = k;
  spec.stepsize.kind = StepsizeSchedule::Kind::constant;
  spec.stepsize.gamma = gamma;
  spec.seed = seed;
  (void)dim;
  return spec;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// test-only problem that emits a NaN gradient at a chosen (iteration, node)
class PoisonProblem final : public Problem {
public:
  PoisonProblem(int dim, int nodes, long long bad_iter, int bad_node)
      : dim_(dim), nodes_(nodes), bad_iter_(bad_iter), bad_node_(bad_node) {}
  int dim() const override { return dim_; }
  int nodes() const override { return nodes_; }
  DataStrategy strategy() const override { return DataStrategy::shared; }
  double lipschitz() const override { return 1.0; }
  std::optional<double> sigma_sq() const override { return 0.0; }
  std::optional<double> zeta_sq() const override { return 0.0; }
  std::optional<double> f_star() const override { return 0.0; }
  double loss(std::span<const double> x) const override { return 0.5 * sq_dist(x, zeros()); }
  double node_loss(int, std::span<const double> x) const override { return loss(x); }
  void node_gradient(int, std::span<const double> x, std::span<double> out) const override {
    for (int c = 0; c < dim_; ++c) out[c] = x[c];
  }
  void global_gradient(std::span<const double> x, std::span<double> out) const override {
    node_gradient(0, x, out);
  }
  void stochastic_gradient(int node, std::span<const double> x, std::uint64_t,
                           std::uint64_t iteration, std::uint64_t,
                           std::span<double> out) const override {
    node_gradient(node, x, out);
    if (static_cast<long long>(iteration) == bad_iter_ && node == bad_node_)
      out[0] = std::nan("");
  }

private:
  std::span<const double> zeros() const { return zeros_; }
  int dim_;
  int nodes_;
  long long bad_iter_;
  int bad_node_;
  std::vector<double> zeros_ = std::vector<double>(dim_, 0.0);
};

}  // namespace

TEST_CASE("dpsgd update, hand values") {
  // N=1, n=2, W = complete(2), X=[1,3], G=[2,-1], gamma=0.1
  TrainState state = make_initial_state(1, 2, 0);
  state.x = {1.0, 3.0};
  const std::vector<double> g = {2.0, -1.0};
  SUBCASE("average then update: X' = XW - gamma G = [1.8, 2.1]") {
    apply_dpsgd_update(state, WeightMatrix::complete(2), 0.1, g, MixOrder::average_then_update);
    CHECK(state.x[0] == doctest::Approx(1.8).epsilon(1e-15));
    CHECK(state.x[1] == doctest::Approx(2.1).epsilon(1e-15));
    CHECK(state.iteration == 1);
  }
  SUBCASE("update then average: X' = (X - gamma G) W = [1.95, 1.95]") {
    apply_dpsgd_update(state, WeightMatrix::complete(2), 0.1, g, MixOrder::update_then_average);
    CHECK(state.x[0] == doctest::Approx(1.95).epsilon(1e-15));
    CHECK(state.x[1] == doctest::Approx(1.95).epsilon(1e-15));
  }
  SUBCASE("dimension mismatch rejected") {
    CHECK_THROWS_AS(
        apply_dpsgd_update(state, WeightMatrix::complete(3), 0.1, g, MixOrder::average_then_update),
        std::invalid_argument);
  }
}

TEST_CASE("identity mixing leaves chains independent") {
  const QuadraticProblem p(3, 4, 1.0, 0.2, DataStrategy::partitioned, 0.5);
  RunSpec spec = quadratic_run(Algorithm::dpsgd, 3, 4, &p, 50, 0.1, 7);
  spec.topology = WeightMatrix::identity(4);
  const auto trace = run_training(spec);

  // each column must equal a single-node run over the same per-node stream:
  // identity mixing means column i evolves as x <- x - gamma g_i(x)
  TrainState manual = make_initial_state(3, 4, 7);
  std::vector<double> g(3);
  for (long long k = 0; k < 50; ++k) {
    for (int i = 0; i < 4; ++i) {
      auto col = manual.column(i);
      p.stochastic_gradient(i, col, 7, k, 0, g);
      for (int c = 0; c < 3; ++c) col[c] -= 0.1 * g[c];
    }
    manual.iteration++;
  }
  for (int i = 0; i < 4; ++i)
    CHECK(sq_dist(trace.final_state.column(i), manual.column(i)) <= 1e-24);
}

TEST_CASE("fixed point: zero gradients keep the state put") {
  const QuadraticProblem p(4, 3, 0.0, 0.0, DataStrategy::shared, 1.0);
  std::vector<double> start(4, 1.0);  // every column at the common center
  RunSpec spec = quadratic_run(Algorithm::dpsgd, 4, 3, &p, 20, 0.2, 1);
  spec.start_override = start;
  const auto trace = run_training(spec);
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 4; ++c) CHECK(trace.final_state.column(i)[c] == doctest::Approx(1.0));
}

TEST_CASE("cpsgd") {
  SUBCASE("hand sequence on the 1-d quadratic: 0.5 then 0.75") {
    const QuadraticProblem p(1, 1, 0.0, 0.0, DataStrategy::shared, 1.0);
    RunSpec spec = quadratic_run(Algorithm::cpsgd, 1, 1, &p, 2, 0.5, 1);
    const auto trace = run_training(spec);
    CHECK(trace.final_model[0] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(trace.records[1].loss_avg == doctest::Approx(0.5 * 0.25).epsilon(1e-12));
  }
  SUBCASE("consensus is identically zero") {
    const QuadraticProblem p(5, 6, 1.0, 0.4, DataStrategy::partitioned, 1.0);
    RunSpec spec = quadratic_run(Algorithm::cpsgd, 5, 6, &p, 100, 0.05, 3);
    const auto trace = run_training(spec);
    for (const auto& r : trace.records) CHECK(r.consensus_m == 0.0);
  }
  SUBCASE("n=1 dpsgd equals plain sgd") {
    const QuadraticProblem p(3, 1, 0.0, 0.3, DataStrategy::shared, 1.0);
    RunSpec a = quadratic_run(Algorithm::dpsgd, 3, 1, &p, 80, 0.1, 5);
    RunSpec b = quadratic_run(Algorithm::cpsgd, 3, 1, &p, 80, 0.1, 5);
    const auto ta = run_training(a);
    const auto tb = run_training(b);
    CHECK(sq_dist(ta.final_model, tb.final_model) <= 1e-28);
  }
}

TEST_CASE("column averages evolve like the mean gradient step") {
  const QuadraticProblem p(6, 8, 1.0, 0.5, DataStrategy::partitioned, 1.0);
  const auto w = WeightMatrix::ring(8);
  TrainState state = make_initial_state(6, 8, 21);
  std::vector<double> g;
  for (long long k = 0; k < 200; ++k) {
    const auto before = state.average_column();
    evaluate_gradients(p, state, 1, false, g);
    std::vector<double> mean_g(6, 0.0);
    for (int i = 0; i < 8; ++i)
      for (int c = 0; c < 6; ++c) mean_g[c] += g[i * 6 + c] / 8.0;
    apply_dpsgd_update(state, w, 0.05, g, MixOrder::average_then_update);
    const auto after = state.average_column();
    for (int c = 0; c < 6; ++c)
      CHECK(after[c] == doctest::Approx(before[c] - 0.05 * mean_g[c]).epsilon(1e-12));
  }
}

TEST_CASE("complete-graph decentralized averages match the centralized iterate") {
  // affine gradients: the column average of the decentralized run follows
  // exactly the centralized recursion when the draws are shared
  const QuadraticProblem p(4, 8, 1.0, 0.4, DataStrategy::partitioned, 1.0);
  TrainState sd = make_initial_state(4, 8, 11);
  TrainState sc = make_initial_state(4, 8, 11);
  std::vector<double> g;
  const auto w = WeightMatrix::complete(8);
  for (long long k = 0; k < 500; ++k) {
    evaluate_gradients(p, sd, 1, false, g);
    apply_dpsgd_update(sd, w, 0.05, g, MixOrder::average_then_update);
    evaluate_gradients(p, sc, 1, false, g);
    apply_cpsgd_update(sc, 0.05, g);
    const auto avg_d = sd.average_column();
    const auto avg_c = sc.average_column();
    for (int c = 0; c < 4; ++c) CHECK(std::abs(avg_d[c] - avg_c[c]) <= 1e-12);
  }
}

TEST_CASE("eamsgd") {
  SUBCASE("hand exchange: x=2, center=0, alpha=0.5 -> both at 1") {
    TrainState state = make_initial_state(1, 1, 0);
    state.x = {2.0};
    apply_eamsgd_exchange(state, 0.5);
    CHECK(state.x[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(state.center[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("alpha=0 freezes the center and decouples the nodes") {
    const QuadraticProblem p(3, 4, 1.0, 0.2, DataStrategy::partitioned, 1.0);
    RunSpec spec = quadratic_run(Algorithm::eamsgd, 3, 4, &p, 60, 0.05, 13);
    spec.eamsgd.beta = 0.0;  // alpha = beta / n = 0
    spec.eamsgd.tau = 1;
    spec.eamsgd.momentum = 0.5;
    const auto trace = run_training(spec);
    for (int c = 0; c < 3; ++c) CHECK(trace.final_state.center[c] == 0.0);

    // matches four independent momentum chains
    TrainState manual = make_initial_state(3, 4, 13);
    std::vector<double> v(12, 0.0), g(3);
    for (long long k = 0; k < 60; ++k) {
      for (int i = 0; i < 4; ++i) {
        auto col = manual.column(i);
        p.stochastic_gradient(i, col, 13, k, 0, g);
        for (int c = 0; c < 3; ++c) {
          v[i * 3 + c] = 0.5 * v[i * 3 + c] - 0.05 * g[c];
          col[c] += v[i * 3 + c];
        }
      }
    }
    for (int i = 0; i < 4; ++i)
      CHECK(sq_dist(trace.final_state.column(i), manual.column(i)) <= 1e-24);
  }
  SUBCASE("deterministic quadratic converges to the mean center") {
    const QuadraticProblem p(4, 4, 0.5, 0.0, DataStrategy::partitioned, 1.0);
    RunSpec spec = quadratic_run(Algorithm::eamsgd, 4, 4, &p, 200, 0.1, 17);
    spec.eamsgd.beta = 0.9;
    spec.eamsgd.tau = 1;
    spec.eamsgd.momentum = 0.0;
    const auto trace = run_training(spec);
    const double initial_gap = trace.records.front().loss_avg - *p.f_star();
    const double final_gap = p.loss(trace.final_model) - *p.f_star();
    CHECK(final_gap < initial_gap * 1e-3);
  }
  SUBCASE("exchange happens every tau iterations") {
    const QuadraticProblem p(2, 2, 0.0, 0.0, DataStrategy::shared, 1.0);
    RunSpec spec = quadratic_run(Algorithm::eamsgd, 2, 2, &p, 3, 0.1, 19);
    spec.eamsgd.tau = 4;  // no exchange within 3 iterations
    spec.eamsgd.momentum = 0.0;
    spec.eamsgd.beta = 0.9;
    const auto trace = run_training(spec);
    CHECK(trace.final_state.center.empty());  // center untouched
  }
}

TEST_CASE("tuned step size") {
  CHECK(tuned_stepsize(1.0, 0.0, 100, 4) == doctest::Approx(0.5));
  CHECK(tuned_stepsize(1.0, 1.0, 100, 4) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  CHECK(tuned_stepsize(1.0, 2.0, 400, 16) == doctest::Approx(1.0 / 12.0).epsilon(1e-15));
  CHECK_THROWS_AS(tuned_stepsize(0.0, 1.0, 10, 2), std::invalid_argument);
}

TEST_CASE("run_training") {
  const QuadraticProblem noisy(5, 4, 1.0, 0.5, DataStrategy::partitioned, 1.0);
  SUBCASE("K=0 gives an empty trace and the zero model") {
    RunSpec spec = quadratic_run(Algorithm::dpsgd, 5, 4, &noisy, 0, 0.1, 1);
    const auto trace = run_training(spec);
    CHECK(trace.records.empty());
    for (double v : trace.final_model) CHECK(v == 0.0);
  }
  SUBCASE("exact gradient descent on the complete graph decreases strictly") {
    const QuadraticProblem exact(5, 4, 0.0, 0.0, DataStrategy::shared, 1.0);
    RunSpec spec = quadratic_run(Algorithm::dpsgd, 5, 4, &exact, 50, 0.5, 1);
    spec.topology = WeightMatrix::complete(4);
    const auto trace = run_training(spec);
    for (std::size_t i = 1; i < trace.records.size(); ++i)
      CHECK(trace.records[i].loss_avg < trace.records[i - 1].loss_avg);
  }
  SUBCASE("identical config and seed reproduce the trace bit for bit") {
    RunSpec spec = quadratic_run(Algorithm::dpsgd, 5, 4, &noisy, 120, 0.05, 23);
    const auto a = run_training(spec);
    const auto b = run_training(spec);
    CHECK(trace_csv(a) == trace_csv(b));
  }
  SUBCASE("parallel gradient evaluation is bit-identical to sequential") {
    RunSpec spec = quadratic_run(Algorithm::dpsgd, 5, 4, &noisy, 120, 0.05, 29);
    const auto seq = run_training(spec);
    spec.parallel_gradients = true;
    const auto par = run_training(spec);
    CHECK(trace_csv(seq) == trace_csv(par));
  }
  SUBCASE("overlap flag changes only the wall-clock column") {
    RunSpec spec = quadratic_run(Algorithm::dpsgd, 5, 4, &noisy, 50, 0.05, 31);
    spec.network = NetworkModel{};
    spec.network->compute_time = 0.01;
    spec.network->latency = 0.001;
    spec.network->msg_size = 1e6;
    spec.network->bandwidth = 1e8;
    const auto plain = run_training(spec);
    spec.overlap = true;
    const auto overlapped = run_training(spec);
    REQUIRE(plain.records.size() == overlapped.records.size());
    for (std::size_t i = 0; i < plain.records.size(); ++i) {
      CHECK(plain.records[i].loss_avg == overlapped.records[i].loss_avg);
      CHECK(plain.records[i].grad_norm_sq_avg == overlapped.records[i].grad_norm_sq_avg);
      CHECK(plain.records[i].consensus_m == overlapped.records[i].consensus_m);
      CHECK(plain.records[i].running_eps == overlapped.records[i].running_eps);
    }
    CHECK(plain.iteration_time_s > overlapped.iteration_time_s);
  }
  SUBCASE("running eps equals the mean of recorded gradient norms") {
    RunSpec spec = quadratic_run(Algorithm::dpsgd, 5, 4, &noisy, 90, 0.05, 37);
    const auto trace = run_training(spec);
    double sum = 0.0;
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
      sum += trace.records[i].grad_norm_sq_avg;
      CHECK(trace.records[i].running_eps == doctest::Approx(sum / (i + 1)).epsilon(1e-14));
    }
  }
  SUBCASE("metric thinning records every m-th iteration") {
    RunSpec spec = quadratic_run(Algorithm::dpsgd, 5, 4, &noisy, 20, 0.05, 41);
    spec.metric_every = 5;
    const auto trace = run_training(spec);
    REQUIRE(trace.records.size() == 4);
    CHECK(trace.records[1].k == 5);
    CHECK(trace.records[3].k == 15);
  }
  SUBCASE("numeric failure carries the iteration and node") {
    const PoisonProblem poison(3, 4, 7, 2);
    RunSpec spec = quadratic_run(Algorithm::dpsgd, 3, 4, &poison, 50, 0.1, 1);
    try {
      run_training(spec);
      FAIL("expected TrainingNumericError");
    } catch (const TrainingNumericError& e) {
      CHECK(e.iteration == 7);
      CHECK(e.node == 2);
    }
    const auto outcome = run_training_checked(spec);
    CHECK(outcome.failed);
    CHECK(outcome.error_iteration == 7);
    CHECK(outcome.error_node == 2);
    CHECK(outcome.trace.records.size() == 8);  // k = 0..7 recorded before the abort
  }
}

TEST_CASE("consensus does not contract under identity mixing") {
  // mean over the last tenth of the run must not fall below the first tenth
  const QuadraticProblem p(4, 4, 1.0, 0.5, DataStrategy::partitioned, 1.0);
  double first = 0.0, last = 0.0;
  const int seeds = 30;
  const long long k = 300;
  for (int s = 0; s < seeds; ++s) {
    RunSpec spec = quadratic_run(Algorithm::dpsgd, 4, 4, &p, k, 0.05, 100 + s);
    spec.topology = WeightMatrix::identity(4);
    const auto trace = run_training(spec);
    const std::size_t tenth = trace.records.size() / 10;
    for (std::size_t i = 0; i < tenth; ++i) {
      first += trace.records[i].consensus_m;
      last += trace.records[trace.records.size() - 1 - i].consensus_m;
    }
  }
  CHECK(last >= first);
}

TEST_CASE("output model") {
  TrainState state = make_initial_state(2, 3, 0);
  SUBCASE("equal columns return that vector") {
    for (int i = 0; i < 3; ++i) {
      state.column(i)[0] = 1.5;
      state.column(i)[1] = -2.0;
    }
    const auto avg = output_model(state);
    CHECK(avg[0] == 1.5);
    CHECK(avg[1] == -2.0);
  }
  SUBCASE("columns 0 and 2 average to 1") {
    TrainState two = make_initial_state(1, 2, 0);
    two.x = {0.0, 2.0};
    CHECK(output_model(two)[0] == doctest::Approx(1.0));
    CHECK(output_model(two, 0)[0] == 0.0);
    CHECK(output_model(two, 1)[0] == 2.0);
    CHECK_THROWS_AS(output_model(two, 5), std::invalid_argument);
  }
  SUBCASE("deviation of the single-node output is controlled by the consensus metric") {
    const QuadraticProblem p(4, 6, 0.7, 0.0, DataStrategy::partitioned, 1.0);
    RunSpec spec = quadratic_run(Algorithm::dpsgd, 4, 6, &p, 400, 0.1, 3);
    const auto trace = run_training(spec);
    const auto avg = output_model(trace.final_state);
    const double m = trace.records.back().consensus_m;
    for (int i = 0; i < 6; ++i) {
      const auto single = output_model(trace.final_state, i);
      CHECK(sq_dist(avg, single) <= 6 * m + 1e-18);
    }
    // converged symmetric run: every node's deviation is at the average level
    CHECK(sq_dist(avg, output_model(trace.final_state, 0)) <= m * (1.0 + 1e-6) + 1e-18);
  }
}

TEST_CASE("drop schedule divides gamma at the configured iteration") {
  StepsizeSchedule s;
  s.kind = StepsizeSchedule::Kind::drop;
  s.gamma = 0.2;
  s.drop_at = 10;
  s.drop_factor = 10.0;
  CHECK(s.at(0, 0.2) == 0.2);
  CHECK(s.at(9, 0.2) == 0.2);
  CHECK(s.at(10, 0.2) == doctest::Approx(0.02));
  CHECK(s.at(500, 0.2) == doctest::Approx(0.02));

  // the dropped tail contracts slower than the constant run
  const QuadraticProblem p(3, 2, 0.0, 0.0, DataStrategy::shared, 1.0);
  RunSpec dropped = quadratic_run(Algorithm::dpsgd, 3, 2, &p, 30, 0.2, 1);
  dropped.stepsize = s;
  RunSpec constant = quadratic_run(Algorithm::dpsgd, 3, 2, &p, 30, 0.2, 1);
  const auto td = run_training(dropped);
  const auto tc = run_training(constant);
  CHECK(td.records[10].loss_avg == tc.records[10].loss_avg);
  CHECK(td.records[20].loss_avg > tc.records[20].loss_avg);
}

TEST_CASE("mini-batches divide the effective gradient variance by the batch size") {
  const QuadraticProblem p(4, 2, 0.0, 0.5, DataStrategy::shared, 0.0);
  TrainState state = make_initial_state(4, 2, 77);
  std::vector<double> g;
  double sum_sq_b1 = 0.0, sum_sq_b4 = 0.0;
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    state.iteration = t;
    evaluate_gradients(p, state, 1, false, g);
    for (double v : g) sum_sq_b1 += v * v;  // exact gradient is zero at the center
    evaluate_gradients(p, state, 4, false, g);
    for (double v : g) sum_sq_b4 += v * v;
  }
  const double var1 = sum_sq_b1 / (trials * 8);
  const double var4 = sum_sq_b4 / (trials * 8);
  CHECK(var1 == doctest::Approx(0.25).epsilon(0.05));
  CHECK(var4 == doctest::Approx(0.25 / 4.0).epsilon(0.05));
}

TEST_CASE("start override is honored and recorded in the state") {
  const QuadraticProblem p(2, 2, 0.0, 0.0, DataStrategy::shared, 1.0);
  RunSpec spec = quadratic_run(Algorithm::dpsgd, 2, 2, &p, 0, 0.1, 1);
  spec.start_override = std::vector<double>{3.0, -1.0};
  const auto trace = run_training(spec);
  CHECK(trace.final_model[0] == 3.0);
  CHECK(trace.final_model[1] == -1.0);
}
