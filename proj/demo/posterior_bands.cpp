// Posterior of a positive intensity after a few sensing rounds: MAP, Laplace bands and
// MYULA draws on a coarse grid, printed as CSV.

#include "coxsense/coxsense.hpp"

#include <iostream>

using namespace coxsense;

int main() {
    const Domain D = Domain::interval(-1.0, 1.0);
    auto basis = std::make_shared<const BasisModel>(gamma_transform(build_hat_basis(D, 32), se_kernel(D, 0.2), 0.1));

    PosteriorModel post(basis);
    Rng rng = rng_stream(1, "demo");
    const auto leaves = build_action_set(D, 2, false);
    for (const auto& A : leaves.regions) {
        const auto draw = simulate_point_process(toy_intensity, A, 5.0, rng);
        post.observe({0, A, 5.0, draw.locations});
    }
    post.refresh();

    const auto grid = regular_grid(D, 21);
    const auto bands = pointwise_bounds(post, grid, {2.0});
    MyulaConfig cfg;
    cfg.steps = 2000;
    const Chain chain = myula_sample(post, cfg, rng);
    const Matrix F = basis->feature_matrix(grid);
    Vector mean = Vector::Zero(F.rows());
    for (const auto& th : chain.samples) mean += F * post.project(th);
    mean /= static_cast<double>(chain.samples.size());

    const Vector map = F * post.map();
    std::cout << "x,truth,map,lcb,ucb,sample_mean\n";
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto i = static_cast<Eigen::Index>(g);
        std::cout << csv::fmt(grid[g](0)) << "," << csv::fmt(toy_intensity(grid[g])) << "," << csv::fmt(map(i)) << ","
                  << csv::fmt(bands[g].lcb) << "," << csv::fmt(bands[g].ucb) << "," << csv::fmt(mean(i)) << "\n";
    }
    return 0;
}
