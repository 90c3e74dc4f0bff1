#include "coxsense/coxsense.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace coxsense;

namespace {

const Domain I1 = Domain::interval(-1.0, 1.0);

Point pt(double x) { return make_point({x}); }

// Hat basis whose transform is the identity: nodes 2/(m−1) apart, lengthscale 10⁻³.
std::shared_ptr<const BasisModel> identity_basis(int m, double l) {
    return std::make_shared<const BasisModel>(gamma_transform(build_hat_basis(I1, m), se_kernel(I1, 1e-3), l));
}

std::shared_ptr<const BasisModel> se_basis(int m, double gamma, double l) {
    return std::make_shared<const BasisModel>(gamma_transform(build_hat_basis(I1, m), se_kernel(I1, gamma), l));
}

Region interval(int id, double a, double b) { return Region{id, {a}, {b}, 0, std::nullopt}; }

// A few rounds of uniformly placed events over random subintervals.
void synthetic_log(PosteriorModel& post, Rng& rng, int rounds) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int r = 0; r < rounds; ++r) {
        double a = u(rng), b = u(rng);
        if (a > b) std::swap(a, b);
        if (b - a < 0.05) b = std::min(1.0, a + 0.05);
        std::uniform_real_distribution<double> in(a, b);
        std::vector<Point> ev;
        const int n = static_cast<int>(rng() % 6);
        for (int i = 0; i < n; ++i) ev.push_back(pt(in(rng)));
        post.observe({r + 1, interval(r, a, b), 1.0 + 0.5 * (r % 3), ev});
    }
}

Vector feasible_point(const BasisModel& b, Rng& rng) {
    // Γθ = l + positive slack, solved for θ.
    std::uniform_real_distribution<double> u(0.05, 2.0);
    Vector s(b.size());
    for (int i = 0; i < b.size(); ++i) s(i) = b.lower_bound() + u(rng);
    return b.Gamma().partialPivLu().solve(s);
}

}  // namespace

// ---------------------------------------------------------------- energy

TEST(Energy, EmptyLogAtOriginIsZero) {
    PosteriorModel post(se_basis(8, 0.3, 0.0));
    EXPECT_EQ(post.energy(Vector::Zero(8)), 0.0);
}

TEST(Energy, ZeroCountRegionGivesLinearPlusQuadratic) {
    const auto b = se_basis(8, 0.3, 0.0);
    PosteriorModel post(b);
    const Region A = interval(0, -0.4, 0.7);
    post.observe({1, A, 1.0, {}});
    const Vector psi = b->Gamma().transpose() * b->raw().integrate(A);
    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
        const Vector th = standard_normal(8, rng);
        EXPECT_NEAR(post.energy(th), th.dot(psi) + 0.5 * th.squaredNorm(), 1e-12);
    }
}

TEST(Energy, SingleEventDirectSubstitution) {
    const auto b = identity_basis(5, 0.0);
    PosteriorModel post(b);
    post.observe({1, Region::whole(I1), 1.0, {pt(-1.0)}}, Vector::Zero(5));
    Vector th = Vector::Zero(5);
    th(0) = 2.0;
    EXPECT_NEAR(post.energy(th), -std::log(2.0) + 2.0, 1e-12);
}

TEST(Energy, NonpositiveIntensityReturnsInfinity) {
    PosteriorModel post(identity_basis(5, 0.0));
    post.observe({1, Region::whole(I1), 1.0, {pt(-1.0)}});
    Vector th = Vector::Ones(5);
    th(0) = -0.5;
    EXPECT_TRUE(std::isinf(post.energy(th)));
    th(0) = 0.0;
    EXPECT_TRUE(std::isinf(post.energy(th)));
}

TEST(Energy, EmptyLogGradientAndHessian) {
    const auto b = se_basis(6, 0.4, 0.0);
    PosteriorModel post(b);
    const Region A = interval(0, 0.0, 1.0);
    post.observe({1, A, 2.5, {}});
    const Vector psi = b->Gamma().transpose() * b->raw().integrate(A);
    Rng rng(2);
    const Vector th = standard_normal(6, rng);
    EXPECT_LE((post.energy_grad(th) - (2.5 * psi + th)).norm(), 1e-12);
    EXPECT_LE((post.energy_hess(th) - Matrix::Identity(6, 6)).norm(), 1e-15);
}

TEST(Energy, DerivativesMatchCentralDifferences) {
    const auto b = se_basis(12, 0.3, 0.1);
    PosteriorModel post(b);
    Rng rng(3);
    synthetic_log(post, rng, 8);
    for (int k = 0; k < 20; ++k) {
        const Vector th = feasible_point(*b, rng);
        const Vector g = post.energy_grad(th);
        const Matrix H = post.energy_hess(th);
        Vector fd(12);
        Matrix fh(12, 12);
        for (int i = 0; i < 12; ++i) {
            const double h = 1e-6 * std::max(1.0, std::abs(th(i)));
            Vector p = th, q = th;
            p(i) += h;
            q(i) -= h;
            fd(i) = (post.energy(p) - post.energy(q)) / (2 * h);
            fh.col(i) = (post.energy_grad(p) - post.energy_grad(q)) / (2 * h);
        }
        EXPECT_LE((g - fd).norm(), 1e-5 * std::max(1.0, g.norm()));
        EXPECT_LE((H - fh).norm(), 1e-3 * std::max(1.0, H.norm()));
        EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(H).eigenvalues().minCoeff(), 1.0 - 1e-10);
    }
}

// ---------------------------------------------------------------- MAP

TEST(MapEstimate, EmptyLogWithoutBoundIsOrigin) {
    PosteriorModel post(se_basis(8, 0.3, 0.0));
    const auto r = map_estimate(post);
    EXPECT_LE(r.theta.norm(), 1e-7);
}

TEST(MapEstimate, EmptyLogProjectsOriginOntoBound) {
    PosteriorModel post(identity_basis(6, 0.1));
    const auto r = map_estimate(post);
    EXPECT_LE((r.theta - Vector::Constant(6, 0.1)).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(MapEstimate, ScalarClosedForm) {
    // One active coefficient: n events at the first node, exposure a on it and none elsewhere.
    for (int n : {1, 4, 17}) {
        for (double a : {0.0, 0.5, 3.0}) {
            PosteriorModel post(identity_basis(3, 0.0));
            Vector psi = Vector::Zero(3);
            psi(0) = a;
            post.observe({1, Region::whole(I1), 1.0, std::vector<Point>(static_cast<std::size_t>(n), pt(-1.0))}, psi);
            const auto r = map_estimate(post);
            // Independent oracle: golden-section search of n log t − a t − t²/2 on (0, n+1].
            auto f = [&](double t) { return n * std::log(t) - a * t - 0.5 * t * t; };
            double lo = 1e-12, hi = n + 1.0;
            const double gr = (std::sqrt(5.0) - 1) / 2;
            for (int it = 0; it < 200; ++it) {
                const double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
                (f(c) > f(d) ? hi : lo) = f(c) > f(d) ? d : c;
            }
            const double closed = (-a + std::sqrt(a * a + 4.0 * n)) / 2.0;
            EXPECT_NEAR(0.5 * (lo + hi), closed, 1e-7);
            EXPECT_NEAR(r.theta(0), closed, 1e-8) << "n=" << n << " a=" << a;
            EXPECT_NEAR(r.theta(1), 0.0, 1e-7);
        }
    }
}

TEST(MapEstimate, KktAndLocalOptimalityOnRandomLogs) {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        const auto b = se_basis(16, 0.15, 0.1);
        PosteriorModel post(b);
        synthetic_log(post, rng, 10);
        const auto r = map_estimate(post);
        EXPECT_LE(r.kkt_residual, 1e-8);
        EXPECT_TRUE(post.feasible(r.theta, 1e-9));
        const double u0 = post.energy(r.theta);
        int checked = 0;
        for (int k = 0; k < 300; ++k) {
            Vector d = standard_normal(16, rng);
            d *= 0.1 * std::uniform_real_distribution<double>(0.0, 1.0)(rng) / d.norm();
            const Vector th = r.theta + d;
            if (!post.feasible(th, 0.0)) continue;
            ++checked;
            EXPECT_LE(u0, post.energy(th) + 1e-10);
        }
        EXPECT_GT(checked, 0);
    }
}

TEST(MapEstimate, WarmStartAgreesWithColdStart) {
    Rng rng(5);
    const auto b = se_basis(16, 0.2, 0.1);
    PosteriorModel post(b);
    synthetic_log(post, rng, 6);
    const Vector cold = map_estimate(post).theta;
    const Vector warm = map_estimate(post, 1e-8, Vector(cold + 0.01 * Vector::Ones(16))).theta;
    EXPECT_LE((cold - warm).norm(), 1e-6);
}

// ---------------------------------------------------------------- Laplace

TEST(Laplace, EmptyLogIsIdentity) {
    PosteriorModel post(se_basis(8, 0.3, 0.1));
    post.refresh();
    EXPECT_LE((laplace_precision(post) - Matrix::Identity(8, 8)).norm(), 1e-15);
}

TEST(Laplace, SingleEventRankOneUpdate) {
    PosteriorModel post(identity_basis(4, 0.0));
    post.observe({1, Region::whole(I1), 1.0, {pt(-1.0)}}, Vector::Zero(4));
    Vector th = Vector::Ones(4);
    th(0) = 2.0;
    Matrix expect = Matrix::Identity(4, 4);
    expect(0, 0) += 0.25;
    EXPECT_LE((laplace_precision_at(post, th) - expect).norm(), 1e-12);
}

TEST(Laplace, ZeroCountRegionLeavesPrecisionUnchanged) {
    Rng rng(9);
    const auto b = se_basis(12, 0.2, 0.1);
    PosteriorModel post(b);
    synthetic_log(post, rng, 5);
    post.refresh();
    const Vector th = post.map();
    const Matrix before = laplace_precision_at(post, th);
    post.observe({99, interval(7, -0.3, 0.2), 3.0, {}});
    const Matrix after = laplace_precision_at(post, th);
    EXPECT_EQ(0, std::memcmp(before.data(), after.data(), sizeof(double) * static_cast<std::size_t>(before.size())));
}

TEST(Laplace, BoundsWithoutPolytopeAreSupportFunction) {
    PosteriorModel post(identity_basis(3, 0.0));
    post.set_map(Vector::Zero(3));
    LaplaceBounds lb(post, {1.0}, false);
    const auto r = lb(Vector::Unit(3, 0));
    EXPECT_NEAR(r.ucb, 1.0, 1e-12);
    EXPECT_NEAR(r.lcb, -1.0, 1e-12);
    const auto z = lb(Vector::Zero(3));
    EXPECT_EQ(z.ucb, 0.0);
    EXPECT_EQ(z.lcb, 0.0);
    const Vector psi = make_point({3.0, 4.0, 0.0});
    EXPECT_NEAR(LaplaceBounds(post, {4.0}, false)(psi).ucb, 10.0, 1e-12);
}

TEST(Laplace, TinyRadiusCollapsesBounds) {
    PosteriorModel post(se_basis(8, 0.3, 0.0));
    post.refresh();
    const auto bounds = pointwise_bounds(post, regular_grid(I1, 20), {1e-14});
    for (const auto& b : bounds) {
        EXPECT_NEAR(b.ucb, 0.0, 1e-6);
        EXPECT_NEAR(b.lcb, 0.0, 1e-6);
    }
}

TEST(Laplace, PolytopeClipsLowerBound) {
    PosteriorModel post(identity_basis(3, 0.0));
    post.set_map(Vector::Zero(3));
    const auto r = ucb_lcb(post, Vector::Unit(3, 0), {1.0});
    EXPECT_NEAR(r.ucb, 1.0, 1e-9);
    EXPECT_NEAR(r.lcb, 0.0, 1e-5);
}

TEST(Laplace, EllipsoidPolytopeMaxMatchesGridSearch) {
    // 2-d problem: max cᵀθ over {(θ−θ̂)ᵀP(θ−θ̂) ≤ β} ∩ {Gθ ≥ l} against a dense grid.
    Matrix P(2, 2), G(2, 2);
    P << 2.0, 0.6, 0.6, 1.0;
    G << 1.0, 0.3, -0.2, 1.0;
    const double l = 0.1, beta = 1.5;
    const Vector th = make_point({0.4, 0.5});
    ASSERT_TRUE(((G * th).array() >= l).all());
    Eigen::LLT<Matrix> llt(P);
    for (const Vector c : {Vector(make_point({1.0, 0.0})), Vector(make_point({-1.0, -0.4})), Vector(make_point({-0.2, 1.0}))}) {
        const auto got = ellipsoid_polytope_max(th, P, llt, &G, l, c, beta);
        double best = -std::numeric_limits<double>::infinity();
        const int n = 2000;
        for (int i = 0; i <= n; ++i)
            for (int j = 0; j <= n; ++j) {
                const Vector x = make_point({-3.0 + 6.0 * i / n, -3.0 + 6.0 * j / n});
                const Vector d = x - th;
                if (d.dot(P * d) <= beta && ((G * x).array() >= l).all()) best = std::max(best, c.dot(x));
            }
        EXPECT_GE(got.value, best - 1e-12);
        EXPECT_LE(got.value, best + 1e-2);
        const Vector d = got.theta - th;
        EXPECT_LE(d.dot(P * d), beta * (1 + 1e-9));
        EXPECT_TRUE(((G * got.theta).array() >= l - 1e-9).all());
    }
}

// ---------------------------------------------------------------- log

TEST(ObservationLog, ValidatesEntries) {
    ObservationLog log;
    EXPECT_THROW(log.append({1, interval(0, 0.0, 0.5), 1.0, {pt(0.7)}}), DomainError);
    EXPECT_THROW(log.append({1, interval(0, 0.0, 0.5), 0.0, {}}), ParameterError);
    log.append({0, interval(0, 0.0, 0.5), 1.0, {pt(0.2)}});
    EXPECT_EQ(log.entries().front().round, 1);
}

TEST(ObservationLog, WriteReadRoundTrip) {
    ObservationLog log;
    log.append({1, interval(3, -1.0, 0.0), 5.0, {pt(-0.25), pt(-0.125)}});
    log.append({2, Region{4, {0.0}, {0.5}, 2, 1}, 5.0, {}});
    log.append({3, interval(5, 0.5, 1.0), 2.5, {pt(0.9)}});
    const auto dir = std::filesystem::temp_directory_path();
    const auto c = (dir / "coxsense_log.csv").string(), j = (dir / "coxsense_log.json").string();
    log.write(c, j, 1, "# header");
    const auto back = ObservationLog::read(c, j);
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back.total_events(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& a = log.entries()[i];
        const auto& b = back.entries()[i];
        EXPECT_EQ(a.round, b.round);
        EXPECT_EQ(a.region.id, b.region.id);
        EXPECT_EQ(a.region.lower, b.region.lower);
        EXPECT_EQ(a.region.parent, b.region.parent);
        EXPECT_EQ(a.duration, b.duration);
        ASSERT_EQ(a.events.size(), b.events.size());
        for (std::size_t k = 0; k < a.events.size(); ++k) EXPECT_EQ(a.events[k], b.events[k]);
    }
}
