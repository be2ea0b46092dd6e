#include <cmath>
#include <random>
#include <vector>

#include <Eigen/QR>
#include <gtest/gtest.h>

#include "sls/model.hpp"
#include "sls/nmpc/box_qp.hpp"
#include "sls/nmpc/ocp.hpp"
#include "sls/nmpc/solver.hpp"
#include "sls/simulator.hpp"

using namespace sls;
using namespace sls::nmpc;

namespace {

OcpProblem hover_problem(const Vec3& target, const SystemState& start, int horizon = 20, Mode mode = Mode::LoadAware,
                         PhysicalParams p = {})
{
    OcpProblem pb;
    pb.horizon = horizon;
    pb.params = p;
    pb.mode = mode;
    pb.u_max = p.vehicle.max_thrust_per_motor;
    pb.initial_state = pack(start);
    pb.reference.assign(horizon + 1, hover_reference(target, p));
    return pb;
}

std::vector<InputVec> random_inputs(std::mt19937_64& rng, int n, double center, double spread)
{
    std::uniform_real_distribution<double> d(center - spread, center + spread);
    std::vector<InputVec> us(n);
    for (auto& u : us)
        u = InputVec(d(rng), d(rng), d(rng), d(rng));
    return us;
}

}  // namespace

TEST(StageCost, Examples)
{
    const PhysicalParams p;
    const OcpWeights w;
    const StageReference ref = hover_reference(Vec3(0, 0, 1.8), p);
    const StateVec x = pack(hover_state(Vec3(0, 0, 1.8), p));
    const InputVec u = ref.input;
    EXPECT_NEAR(stage_cost(x, ref, u, w), 0.0, 1e-20);

    // Quadrotor position error only; the load moves with it so the load block sees (1,0,0) too.
    OcpWeights quad_only = w;
    quad_only.load_pos = quad_only.load_vel = quad_only.load_dir = quad_only.load_rate = 0;
    StateVec y = x;
    y[idx::pos] += 1.0;
    EXPECT_NEAR(stage_cost(y, ref, u, quad_only), 100.0, 1e-12);

    // Quadratic homogeneity in the translational errors.
    StateVec e = x;
    e.segment<3>(idx::pos) += Vec3(0.1, -0.2, 0.05);
    e.segment<3>(idx::vel) += Vec3(0.3, 0.1, -0.1);
    StateVec e2 = x;
    e2.segment<3>(idx::pos) += 2 * Vec3(0.1, -0.2, 0.05);
    e2.segment<3>(idx::vel) += 2 * Vec3(0.3, 0.1, -0.1);
    const InputVec du(0.1, -0.2, 0.3, 0.0);
    EXPECT_NEAR(stage_cost(e2, ref, InputVec(u + 2 * du), quad_only),
                4 * stage_cost(e, ref, InputVec(u + du), quad_only), 1e-10);
}

TEST(StageCost, TerminalScalesStateAndDropsInput)
{
    const PhysicalParams p;
    const OcpWeights w;
    const StageReference ref = hover_reference(Vec3::Zero(), p);
    StateVec x = pack(hover_state(Vec3::Zero(), p));
    x[idx::vel] = 0.5;
    x[idx::load_vel] = 0.5;
    const InputVec u = ref.input + InputVec::Constant(1.0);
    const double stage = stage_cost(x, ref, u, w);
    const double term = stage_cost(x, ref, u, w, 3.0, true);
    EXPECT_NEAR(term, w.terminal_scale * (stage - 4.0 * w.control), 1e-9);
}

TEST(StageCost, RateLimitPenalty)
{
    const PhysicalParams p;
    const OcpWeights w;
    const StageReference ref = hover_reference(Vec3::Zero(), p);
    StateVec x = pack(hover_state(Vec3::Zero(), p));
    x[idx::rate + 2] = 2.0;
    const double inside = stage_cost(x, ref, ref.input, w);
    EXPECT_NEAR(inside, 4.0 * w.quad_rate, 1e-12);
    x[idx::rate + 2] = -4.0;
    EXPECT_NEAR(stage_cost(x, ref, ref.input, w), 16.0 * w.quad_rate + w.rate_limit_penalty, 1e-12);
}

TEST(Discretize, HoverFixedPoint)
{
    const PhysicalParams p;
    const StateVec x = pack(hover_state(Vec3(0, 0, 1), p));
    const InputVec u = hover_input(p).vec();
    EXPECT_NEAR((discretize_dynamics<double>(x, u, 0.05, Mode::LoadAware, p) - x).norm(), 0.0, 1e-9);
    // The classic model does not carry the load, so its hover needs only m_Q g.
    const InputVec uq = InputVec::Constant(p.vehicle.mass_q * p.vehicle.gravity_mag / 4);
    EXPECT_NEAR((discretize_dynamics<double>(x, uq, 0.05, Mode::Classic, p) - x).norm(), 0.0, 1e-9);
}

TEST(Discretize, MatchesPlantWithoutStabilization)
{
    const PhysicalParams p;
    std::mt19937_64 rng(41);
    std::normal_distribution<double> n(0, 1);
    for (int i = 0; i < 100; ++i) {
        SystemState s = hover_state(Vec3(n(rng), n(rng), n(rng)), p);
        s.quad.velocity = Vec3(n(rng), n(rng), n(rng));
        s.quad.attitude = UnitQuaternion(1, 0.1 * n(rng), 0.1 * n(rng), 0.1 * n(rng)).normalized();
        s.quad.body_rates = Vec3(n(rng), n(rng), n(rng));
        const Vec3 dir = Vec3(0.3 * n(rng), 0.3 * n(rng), -1).normalized();
        s.load.position = s.quad.position + dir;
        const Vec3 w = dir.cross(Vec3(n(rng), n(rng), n(rng)));
        s.load.velocity = s.quad.velocity + w.cross(dir);
        const ControlInput u{{8 + n(rng), 8 + n(rng), 8 + n(rng), 8 + n(rng)}};
        const StateVec a = pack(step(s, u, Vec3::Zero(), 1e-3, p, {false, false}));
        const StateVec b = discretize_dynamics<double>(pack(s), u.vec(), 1e-3, Mode::LoadAware, p);
        EXPECT_NEAR((a - b).norm(), 0.0, 1e-9);
    }
}

TEST(Discretize, ClassicFreezesLoad)
{
    const PhysicalParams p;
    std::mt19937_64 rng(42);
    std::normal_distribution<double> n(0, 1);
    for (int i = 0; i < 50; ++i) {
        StateVec x = pack(hover_state(Vec3(n(rng), n(rng), n(rng)), p));
        x.segment<3>(idx::load_vel) = Vec3(n(rng), n(rng), n(rng));
        const InputVec u(5 + n(rng), 5 + n(rng), 5 + n(rng), 5 + n(rng));
        const StateVec y = discretize_dynamics<double>(x, u, 0.05, Mode::Classic, p);
        EXPECT_EQ(y.segment<6>(idx::load_pos), x.segment<6>(idx::load_pos));
    }
}

TEST(ModeSwitch, RoundTripAndLoadOnlyCost)
{
    const PhysicalParams p;
    const OcpProblem pb = hover_problem(Vec3::Zero(), hover_state(Vec3::Zero(), p));
    const OcpProblem back = baseline_mode_switch(baseline_mode_switch(pb));
    EXPECT_EQ(back.mode, pb.mode);
    EXPECT_EQ(back.weights.load_dir, pb.weights.load_dir);
    EXPECT_EQ(back.initial_state, pb.initial_state);

    const OcpProblem classic = baseline_mode_switch(pb);
    EXPECT_EQ(classic.mode, Mode::Classic);
    StateVec x = pb.initial_state;
    x.segment<3>(idx::load_pos) += Vec3(0.3, -0.2, 0.0);
    x.segment<3>(idx::load_vel) += Vec3(0.5, 0.1, 0.0);
    EXPECT_EQ(stage_cost(classic, x, pb.reference[0], pb.reference[0].input), 0.0);
    EXPECT_GT(stage_cost(pb, x, pb.reference[0], pb.reference[0].input), 0.0);

    // Load at rest straight below: identical cost in both modes at the hover input.
    const InputVec u = hover_input(p).vec();
    for (bool terminal : {false, true})
        EXPECT_EQ(stage_cost(pb, pb.initial_state, pb.reference[0], u, terminal),
                  stage_cost(classic, pb.initial_state, pb.reference[0], u, terminal));
}

TEST(Solve, HoverEquilibrium)
{
    const PhysicalParams p;
    const Vec3 target(0, 0, 1.8);
    const OcpProblem pb = hover_problem(target, hover_state(target, p));
    const ControlSolution sol = NmpcSolver().solve(pb);
    EXPECT_LE(sol.iterations, 5);
    EXPECT_NEAR(sol.first().total(), 33.32, 0.02 * 33.32);
    for (double t : sol.first().thrusts)
        EXPECT_NEAR(t, 8.33, 0.02 * 8.33);
    EXPECT_TRUE(sol.converged);
}

TEST(Solve, HoverFromOffsetConverges)
{
    const PhysicalParams p;
    const Vec3 target(0, 0, 1.8);
    SolverOptions opt;
    opt.max_iterations = 30;
    const OcpProblem pb = hover_problem(target, hover_state(target + Vec3(0.2, -0.1, 0.1), p));
    const ControlSolution sol = NmpcSolver(opt).solve(pb);
    EXPECT_TRUE(sol.converged);
    EXPECT_LT(sol.kkt_residual, 1e-6);
}

TEST(Solve, ClimbBeyondLimitsSaturates)
{
    const PhysicalParams p;
    OcpProblem pb = hover_problem(Vec3(0, 0, 100), hover_state(Vec3::Zero(), p));
    for (auto& r : pb.reference)
        r.quad_vel = Vec3(0, 0, 50);
    const ControlSolution sol = NmpcSolver().solve(pb);
    for (double t : sol.first().thrusts)
        EXPECT_EQ(t, p.vehicle.max_thrust_per_motor);
}

TEST(Solve, SingleStageAtReferenceReturnsReferenceInput)
{
    const PhysicalParams p;
    const Vec3 target(1, 2, 3);
    const OcpProblem pb = hover_problem(target, hover_state(target, p), 1);
    const ControlSolution sol = NmpcSolver().solve(pb);
    EXPECT_NEAR((sol.first().vec() - pb.reference[0].input).norm(), 0.0, 1e-9);
}

TEST(Solve, BoundsRespectedExactly)
{
    const PhysicalParams p;
    std::mt19937_64 rng(43);
    std::normal_distribution<double> n(0, 1);
    NmpcSolver solver;
    for (int i = 0; i < 10; ++i) {
        SystemState s = hover_state(Vec3(n(rng), n(rng), 1.8 + n(rng)), p);
        s.quad.velocity = Vec3(n(rng), n(rng), n(rng)) * 2;
        OcpProblem pb = hover_problem(Vec3(0, 0, 1.8), s, 10);
        const ControlSolution sol = solver.solve(pb);
        for (const auto& u : sol.inputs)
            for (double t : u.thrusts) {
                EXPECT_GE(t, 0.0);
                EXPECT_LE(t, p.vehicle.max_thrust_per_motor);
            }
    }
}

TEST(Solve, MeritNonIncreasingAcrossAcceptedIterates)
{
    const PhysicalParams p;
    std::mt19937_64 rng(44);
    std::normal_distribution<double> n(0, 1);
    SolverOptions opt;
    opt.max_iterations = 15;
    NmpcSolver solver(opt);
    int steps = 0;
    for (int i = 0; i < 10; ++i) {
        SystemState s = hover_state(Vec3(n(rng), n(rng), 1.8 + 0.5 * n(rng)), p);
        s.quad.velocity = Vec3(n(rng), n(rng), 0.3 * n(rng));
        const OcpProblem pb = hover_problem(Vec3(0, 0, 1.8), s, 15, i % 2 ? Mode::Classic : Mode::LoadAware);
        const ControlSolution sol = solver.solve(pb);
        for (const auto& [before, after] : sol.merit_steps) {
            EXPECT_LE(after, before * (1 + 1e-12));
            ++steps;
        }
    }
    EXPECT_GT(steps, 10);
}

TEST(Solve, WarmRestartFromPredictedState)
{
    const PhysicalParams p;
    const Vec3 target(0, 0, 1.8);
    SolverOptions opt;
    opt.max_iterations = 50;
    NmpcSolver solver(opt);
    OcpProblem pb = hover_problem(target, hover_state(target + Vec3(0.05, 0.0, 0.0), p));
    const ControlSolution first = solver.solve(pb);
    ASSERT_TRUE(first.converged);
    pb.initial_state = first.states[1];
    const ControlSolution again = solver.solve(pb, &first);
    EXPECT_LE(again.iterations, 3);
    EXPECT_TRUE(again.converged);

    // At the equilibrium itself the shifted solution is already optimal.
    OcpProblem hover = hover_problem(target, hover_state(target, p));
    const ControlSolution h1 = solver.solve(hover);
    hover.initial_state = h1.states[1];
    EXPECT_LE(solver.solve(hover, &h1).iterations, 3);
}

TEST(Solve, ClassicEquivalenceForVanishingLoadMass)
{
    PhysicalParams p;
    p.load.mass_l = 1e-9;
    std::mt19937_64 rng(45);
    std::normal_distribution<double> n(0, 1);
    SolverOptions opt;
    opt.max_iterations = 30;
    NmpcSolver solver(opt);
    for (int i = 0; i < 5; ++i) {
        SystemState s = hover_state(Vec3(0.3 * n(rng), 0.3 * n(rng), 1.8 + 0.2 * n(rng)), p);
        s.quad.velocity = Vec3(0.3 * n(rng), 0.3 * n(rng), 0.0);
        OcpProblem load = hover_problem(Vec3(0, 0, 1.8), s, 10, Mode::LoadAware, p);
        // The swing of a massless load still enters the load-aware cost, so
        // compare the predictions with the load block unweighted.
        load.weights.load_pos = load.weights.load_vel = load.weights.load_dir = load.weights.load_rate = 0.0;
        const OcpProblem classic = baseline_mode_switch(load);
        const ControlSolution a = solver.solve(load), b = solver.solve(classic);
        EXPECT_LT((a.first().vec() - b.first().vec()).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(Gradient, MatchesFiniteDifferences)
{
    const PhysicalParams p;
    std::mt19937_64 rng(46);
    std::normal_distribution<double> n(0, 1);
    for (int i = 0; i < 100; ++i) {
        SystemState s = hover_state(Vec3(n(rng), n(rng), 1.8 + n(rng)), p);
        s.quad.velocity = Vec3(n(rng), n(rng), n(rng)) * 0.5;
        const OcpProblem pb = hover_problem(Vec3(0, 0, 1.8), s, 5, i % 3 == 0 ? Mode::Classic : Mode::LoadAware);
        const std::vector<InputVec> us = random_inputs(rng, pb.horizon, 8.33, 1.0);
        const Eigen::VectorXd g = rollout_gradient(pb, us);
        Eigen::VectorXd fd(g.size());
        for (int k = 0; k < pb.horizon; ++k)
            for (int j = 0; j < kInputDim; ++j) {
                const double h = 1e-5;
                auto a = us, b = us;
                a[k][j] += h;
                b[k][j] -= h;
                fd[kInputDim * k + j] = (rollout_cost(pb, a) - rollout_cost(pb, b)) / (2 * h);
            }
        EXPECT_LE((g - fd).norm(), 1e-5 * std::max(1.0, fd.norm())) << i;
    }
}

TEST(BoxQp, MatchesUnconstrainedAndClampsActive)
{
    std::mt19937_64 rng(47);
    std::normal_distribution<double> n(0, 1);
    for (int i = 0; i < 50; ++i) {
        Eigen::MatrixXd a(8, 8);
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c)
                a(r, c) = n(rng);
        const Eigen::MatrixXd h = a * a.transpose() + Eigen::MatrixXd::Identity(8, 8);
        Eigen::VectorXd g(8);
        for (int r = 0; r < 8; ++r)
            g[r] = 3 * n(rng);
        const Eigen::VectorXd inf = Eigen::VectorXd::Constant(8, 1e9);
        const auto free = solve_box_qp(h, g, -inf, inf);
        EXPECT_LT((free.x - h.ldlt().solve(-g)).norm(), 1e-8);

        const Eigen::VectorXd lo = Eigen::VectorXd::Constant(8, -0.2), hi = Eigen::VectorXd::Constant(8, 0.2);
        const auto box = solve_box_qp(h, g, lo, hi);
        ASSERT_TRUE(box.converged);
        const Eigen::VectorXd grad = h * box.x + g;
        for (int r = 0; r < 8; ++r) {
            EXPECT_GE(box.x[r], -0.2);
            EXPECT_LE(box.x[r], 0.2);
            // KKT: interior components are stationary, bound components push outward.
            if (box.x[r] > -0.2 + 1e-12 && box.x[r] < 0.2 - 1e-12)
                EXPECT_NEAR(grad[r], 0.0, 1e-8);
            else if (box.x[r] <= -0.2 + 1e-12)
                EXPECT_GE(grad[r], -1e-8);
            else
                EXPECT_LE(grad[r], 1e-8);
        }
    }
}

TEST(BoxQp, IllConditionedWithManyActiveBounds)
{
    std::mt19937_64 rng(48);
    std::normal_distribution<double> n(0, 1);
    for (int i = 0; i < 30; ++i) {
        const int dim = 80;
        // Random orthogonal basis, eigenvalues spread over eight decades.
        Eigen::MatrixXd a(dim, dim);
        for (int r = 0; r < dim; ++r)
            for (int c = 0; c < dim; ++c)
                a(r, c) = n(rng);
        const Eigen::MatrixXd q = a.householderQr().householderQ();
        Eigen::VectorXd ev(dim);
        for (int r = 0; r < dim; ++r)
            ev[r] = std::pow(10.0, -3.0 + 8.0 * r / (dim - 1));
        const Eigen::MatrixXd h = q * ev.asDiagonal() * q.transpose();
        Eigen::VectorXd g(dim);
        for (int r = 0; r < dim; ++r)
            g[r] = 1e3 * n(rng);
        const Eigen::VectorXd lo = Eigen::VectorXd::Constant(dim, -1.0), hi = Eigen::VectorXd::Constant(dim, 0.5);
        // The primal-dual pass tends to cycle on dense spectra like this one, so
        // the active-set fallback does the work; give it room.
        const auto qp = solve_box_qp(h, g, lo, hi, 5000);
        ASSERT_TRUE(qp.converged) << i;
        const Eigen::VectorXd grad = h * qp.x + g;
        const double tol = 1e-7 * (1 + grad.cwiseAbs().maxCoeff());
        int active = 0;
        for (int r = 0; r < dim; ++r) {
            ASSERT_GE(qp.x[r], -1.0 - 1e-12);
            ASSERT_LE(qp.x[r], 0.5 + 1e-12);
            if (qp.x[r] <= -1.0 + 1e-12) {
                EXPECT_GE(grad[r], -tol);
                ++active;
            } else if (qp.x[r] >= 0.5 - 1e-12) {
                EXPECT_LE(grad[r], tol);
                ++active;
            } else {
                EXPECT_NEAR(grad[r], 0.0, tol);
            }
        }
        EXPECT_GT(active, 0);
    }
}

TEST(Problem, Validation)
{
    const PhysicalParams p;
    OcpProblem pb = hover_problem(Vec3::Zero(), hover_state(Vec3::Zero(), p));
    pb.reference.pop_back();
    EXPECT_THROW(NmpcSolver().solve(pb), InvalidArgument);
    pb = hover_problem(Vec3::Zero(), hover_state(Vec3::Zero(), p));
    pb.initial_state[0] = std::nan("");
    EXPECT_THROW(NmpcSolver().solve(pb), InvalidArgument);
}
