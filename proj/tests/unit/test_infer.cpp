#include <doctest.h>

#include "oracles.hpp"
#include "psm/infer.hpp"
#include "psm/random.hpp"

using namespace psm;

namespace {

AffineBasis visitation_basis(const TabularMdp& mdp, const Vector& mu) {
    return extract_affine_basis(build_flow_operator(mdp, mu));
}

RewardFunction random_reward(int n, std::uint64_t seed) {
    Rng rng(seed);
    RewardFunction r{Vector(n)};
    for (auto& v : r.values) v = rng.uniform();
    return r;
}

// Model whose tables are the exact density basis of the MDP.
PsmModel exact_model(const TabularMdp& mdp, const TrainingProblem& problem) {
    const AffineBasis exact = exact_density_basis(mdp, problem.rho_state);
    PsmConfig config;
    config.d = exact.dim();
    config.z_pool = 1;
    config.z_batch = 1;
    PsmModel model = init_model(problem, config, 3);
    model.online.phi = exact.basis;
    model.online.bias = exact.bias;
    model.sync_targets();
    return model;
}

}  // namespace

TEST_CASE("toy MDP: the LP stays in the rewarded state") {
    for (double gamma : {0.5, 0.9, 0.99}) {
        const Vector mu = Vector::Unit(2, 0);
        const auto basis = visitation_basis(toy_mdp(gamma, mu), mu);
        // reward on state 0, either action
        const RewardFunction r{(Vector(4) << 1, 1, 0, 0).finished()};
        const auto result = infer_w_exact_lp(basis, r);
        const Vector d = basis.reconstruct(result.w);
        CHECK((d - Vector::Unit(4, 1)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(result.report.objective == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(result.report.method == "vertex_enumeration");
    }
}

TEST_CASE("exact LP optimum equals the best deterministic policy") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const int n_s = 4;
        const int n_a = 2 + static_cast<int>(seed % 2);
        const auto mdp = random_mdp(n_s, n_a, 0.9, seed);
        const Vector mu = random_distribution(n_s, seed + 20);
        const auto r = random_reward(n_s * n_a, seed + 40);
        const auto result = infer_w_exact_lp(visitation_basis(mdp, mu), r);
        CHECK(result.report.converged);
        CHECK(result.report.max_violation < 1e-9);
        CHECK(result.report.objective == doctest::Approx(testing::brute_force_optimal_return(mdp, r, mu)).epsilon(1e-8));
    }
}

TEST_CASE("exact LP optimum matches value iteration") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto mdp = random_mdp(7, 3, 0.95, seed + 100);
        const Vector mu = random_distribution(7, seed);
        const auto r = random_reward(21, seed + 1);
        const auto lp = infer_w_exact_lp(visitation_basis(mdp, mu), r);
        const auto vi = value_iteration(mdp, r, 1e-12);
        const double expected =
            (1.0 - mdp.gamma()) * mu.dot(state_values(vi.q, StochasticPolicy::from_actions(vi.greedy, 3)));
        CHECK(lp.report.objective == doctest::Approx(expected).epsilon(1e-7));
    }
}

TEST_CASE("scaling the reward keeps the optimal visitation") {
    const auto mdp = random_mdp(5, 3, 0.9, 12);
    const Vector mu = random_distribution(5, 2);
    const auto basis = visitation_basis(mdp, mu);
    const auto r = random_reward(15, 9);
    const auto a = infer_w_exact_lp(basis, r);
    const auto b = infer_w_exact_lp(basis, RewardFunction{7.5 * r.values});
    CHECK(b.report.objective == doctest::Approx(7.5 * a.report.objective).epsilon(1e-8));
    CHECK((basis.reconstruct(a.w) - basis.reconstruct(b.w)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("zero reward returns the minimum-norm feasible point") {
    const auto mdp = random_mdp(4, 3, 0.8, 5);
    const Vector mu = random_distribution(4, 6);
    const auto basis = visitation_basis(mdp, mu);
    const auto result = infer_w_exact_lp(basis, RewardFunction{Vector::Zero(12)});
    CHECK(result.report.method == "min_norm_feasible");
    CHECK(basis.reconstruct(result.w).minCoeff() > -1e-10);
    // projection optimality: w . (v - w) >= 0 for every feasible v
    AffineProjector proj(basis);
    for (std::uint64_t k = 0; k < 30; ++k) {
        const Vector d = testing::series_visitation(mdp, random_policy(4, 3, k), mu);
        const Vector v = proj.coordinates(d);
        CHECK(result.w.dot(v - result.w) > -1e-9);
    }
}

TEST_CASE("infeasible programs are reported") {
    AffineBasis basis{Matrix::Zero(2, 4), Vector::Constant(2, -1.0)};
    basis.basis(0, 0) = 1.0;
    basis.basis(1, 0) = -1.0;
    CHECK_THROWS_AS(infer_w_exact_lp(basis, RewardFunction{Vector::Ones(2)}), NumericalError);
    CHECK_THROWS_AS(infer_w_exact_lp(basis, RewardFunction{Vector::Ones(3)}), ValidationError);
}

TEST_CASE("dual descent-ascent agrees with the LP") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto mdp = random_mdp(3, 3, 0.8, seed + 30);
        const Vector mu = random_distribution(3, seed);
        const auto basis = visitation_basis(mdp, mu);
        REQUIRE(basis.dim() <= 6);
        const auto r = random_reward(9, seed + 3);
        const double lp = infer_w_exact_lp(basis, r).report.objective;
        DualConfig config;
        config.w_step = 1e-2;
        config.lambda_step = 1e-2;
        config.max_iterations = 400000;
        config.tol = 1e-7;
        const auto dual = infer_w_dual(basis, r, config);
        CHECK(dual.report.max_violation < 1e-6);
        CHECK(dual.report.objective == doctest::Approx(lp).epsilon(1e-3));
    }
}

TEST_CASE("dual rejects bad budgets") {
    DualConfig config;
    config.w_step = 0.0;
    CHECK_THROWS_AS(infer_w_dual(Matrix::Identity(2, 2), Vector::Ones(2), Vector::Ones(2), config), ValidationError);
    CHECK_THROWS_AS(infer_w_dual(Matrix::Identity(2, 2), Vector::Ones(3), Vector::Ones(2)), ValidationError);
}

TEST_CASE("per-source successor measure LP gives the optimal Q") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto mdp = random_mdp(4, 2, 0.9, seed + 7);
        const auto r = random_reward(8, seed);
        const auto basis = extract_successor_measure_basis(mdp);
        const Matrix w = infer_sm_exact_lp(basis, r);
        const QTable q = q_star(basis, w, r, 2);
        const auto vi = value_iteration(mdp, r, 1e-12);
        CHECK((q - (1.0 - mdp.gamma()) * vi.q).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(greedy_policy(q) == vi.greedy);
    }
    const auto basis = extract_successor_measure_basis(random_mdp(3, 2, 0.9, 1));
    CHECK_THROWS_AS(q_star(basis, Matrix::Zero(basis.basis.cols(), 5), random_reward(6, 1), 2), ValidationError);
}

TEST_CASE("greedy policy breaks ties to the lowest action") {
    QTable q(3, 3);
    q << 1, 1, 0,
         0, 2, 2,
         5, 4, 3;
    CHECK(greedy_policy(q) == std::vector<int>{0, 1, 0});
}

TEST_CASE("model LP rows and objective") {
    const auto mdp = random_mdp(3, 2, 0.9, 4);
    const TrainingProblem problem = TrainingProblem::from_mdp(mdp, random_distribution(6, 8));
    PsmConfig config;
    config.d = 4;
    config.z_pool = 2;
    config.z_batch = 2;
    config.init_scale = 0.5;
    PsmModel model = init_model(problem, config, 21);
    Rng rng(5);
    for (auto& v : model.online.bias) v = rng.normal();
    const Vector r = (Vector(3) << 0.2, -1.0, 3.0).finished();
    const Vector w = (Vector(4) << 0.3, -0.2, 0.7, 1.1).finished();

    const ModelLp lp = build_model_lp(model, r, true);
    REQUIRE(lp.g.rows() == 18 + 6);
    const Vector m = model.density(w);
    CHECK((lp.g.topRows(18) * w + lp.h.head(18) - m).cwiseAbs().maxCoeff() < 1e-12);
    const Matrix measure = model.state_measure(w);
    for (int p = 0; p < 6; ++p) {
        CHECK(lp.g.row(18 + p).dot(w) + lp.h[18 + p] == doctest::Approx(1.0 - measure.row(p).sum()).epsilon(1e-12));
    }
    // c.w is E_rho Q up to the w-independent bias part
    const Vector q = measure * r;
    const Vector q0 = model.state_measure(Vector::Zero(4)) * r;
    CHECK(lp.c.dot(w) == doctest::Approx(model.rho_pair().dot(q - q0)).epsilon(1e-12));
    CHECK(build_model_lp(model, r, false).g.rows() == 18);
    CHECK_THROWS_AS(build_model_lp(model, Vector::Ones(4), true), ValidationError);
}

TEST_CASE("feasibility gap") {
    // w >= 1 and w <= -1 need a slack of 1
    const Matrix g = (Matrix(2, 1) << 1.0, -1.0).finished();
    CHECK(feasibility_gap(g, Vector::Constant(2, -1.0)) == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(feasibility_gap(g, Vector::Constant(2, 1.0)) < 1e-9);
}

TEST_CASE("inference on an exact model bounds the optimal values") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto mdp = random_mdp(4, 2, 0.9, seed + 60);
        const TrainingProblem problem = TrainingProblem::from_mdp(mdp, random_distribution(8, seed));
        const PsmModel model = exact_model(mdp, problem);
        const auto reward = goal_reward(mdp, static_cast<StateIndex>(seed % 4));
        const auto result = infer_w_model(model, reward);
        CHECK(result.report.relaxation < 1e-9);
        CHECK(result.report.status == "optimal");
        // Nonnegative state marginals relax nonnegative state-action
        // measures, and every row is optimized on its own: Q is an upper
        // bound on the normalized Q*, and the mass bound caps it at 1.
        const QTable q = q_star(model, result.w, reward);
        const auto vi = value_iteration(mdp, reward, 1e-12);
        CHECK((q - (1.0 - mdp.gamma()) * vi.q).minCoeff() > -1e-6);
        CHECK(q.maxCoeff() < 1.0 + 1e-6);
    }
}

TEST_CASE("infeasible learned tables are relaxed") {
    const auto mdp = random_mdp(3, 2, 0.9, 2);
    const TrainingProblem problem = TrainingProblem::from_mdp(mdp, Vector::Constant(6, 1.0 / 6));
    PsmConfig config;
    config.d = 1;
    config.z_pool = 1;
    config.z_batch = 1;
    PsmModel model = init_model(problem, config, 1);
    // rows 0 and 1 ask for w >= 1 and w <= -1
    model.online.phi.setZero();
    model.online.phi(0, 0) = 1.0;
    model.online.phi(1, 0) = -1.0;
    model.online.bias.setOnes();
    model.online.bias.head(2).setConstant(-1.0);
    const auto reward = goal_reward(mdp, 0);
    const auto relaxed = infer_w_model(model, reward);
    CHECK(relaxed.report.relaxation == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(relaxed.report.status == "optimal");
    CHECK(std::abs(relaxed.w[0]) < 1e-4);
    ModelInferenceOptions strict;
    strict.relax_infeasible = false;
    CHECK(infer_w_model(model, reward, strict).report.status != "optimal");
}

TEST_CASE("report text") {
    InferenceReport report;
    report.method = "interior_point";
    report.wall_seconds = 1.5;
    CHECK(report.to_text().find("wall_seconds") != std::string::npos);
    CHECK(report.to_text(false).find("wall_seconds") == std::string::npos);
    CHECK(parse_inference_method("dual") == InferenceMethod::Dual);
    CHECK(to_string(InferenceMethod::Lp) == "lp");
    CHECK_THROWS_AS(parse_inference_method("simplex"), ValidationError);
}

TEST_CASE("successor features from an exact product basis") {
    const auto mdp = random_mdp(6, 3, 0.9, 31);
    const Vector rho = random_distribution(6, 4);
    const AffineBasis folded = fold_bias(exact_density_basis(mdp, rho));
    const SfDecomposition sf = sf_decompose(folded.basis, 6);
    CHECK(sf.reconstruction_error < 1e-10);
    const Matrix features = sf.dual_features(rho);
    AffineProjector proj(folded);
    for (std::uint64_t k = 0; k < 10; ++k) {
        const auto pi = random_policy(6, 3, k);
        const SuccessorMeasure m = successor_measure(mdp, pi);
        const Matrix marginal = m.state_marginal();
        Vector density(18 * 6);
        for (int p = 0; p < 18; ++p) density.segment(p * 6, 6) = marginal.row(p).transpose().cwiseQuotient(rho);
        const Vector w = proj.coordinates(density);
        CHECK(proj.residual(density) < 1e-8);
        CHECK((sf.successor_features(w) - successor_features(m, features)).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("successor features are affine in w") {
    const auto mdp = random_mdp(4, 2, 0.8, 3);
    const AffineBasis folded = fold_bias(exact_density_basis(mdp, Vector::Constant(4, 0.25)));
    const SfDecomposition sf = sf_decompose(folded.basis, 4);
    Rng rng(8);
    Vector w1(folded.dim()), w2(folded.dim());
    for (auto& v : w1) v = rng.normal();
    for (auto& v : w2) v = rng.normal();
    w1[folded.dim() - 1] = 1.0;
    w2[folded.dim() - 1] = 1.0;
    const double alpha = 0.3;
    const Matrix mixed = sf.successor_features(alpha * w1 + (1.0 - alpha) * w2);
    const Matrix expected = alpha * sf.successor_features(w1) + (1.0 - alpha) * sf.successor_features(w2);
    CHECK((mixed - expected).cwiseAbs().maxCoeff() < 1e-10);
    CHECK_THROWS_AS(sf.successor_features(Vector::Zero(2)), ValidationError);
}

TEST_CASE("sf decomposition rank handling") {
    Rng rng(2);
    // phi(p, s+) = phi_psi(p)^T varphi(s+) with rank 2
    const int pairs = 5, d = 3, states = 4;
    Matrix left(pairs * d, 2), right(states, 2);
    for (auto& v : left.reshaped()) v = rng.normal();
    for (auto& v : right.reshaped()) v = rng.normal();
    const Matrix unfolded = left * right.transpose();
    Matrix basis(pairs * states, d);
    for (int p = 0; p < pairs; ++p) basis.middleRows(p * states, states) = unfolded.middleRows(p * d, d).transpose();
    const SfDecomposition full = sf_decompose(basis, states);
    CHECK(full.rank == 2);
    CHECK(full.reconstruction_error < 1e-12);
    CHECK(full.phi_psi_at(0).rows() == 2);
    CHECK(full.phi_psi_at(0).cols() == d);
    const SfDecomposition cut = sf_decompose(basis, states, 1);
    CHECK(cut.reconstruction_error > 1e-6);
    CHECK_THROWS_AS(sf_decompose(basis, states, 5), ValidationError);
    CHECK_THROWS_AS(sf_decompose(basis, 3), ValidationError);
}
