// Cox-Thompson against uniform random sensing on the one-dimensional toy intensity.
//
//   toy_regret [rounds] [seeds]

#include "coxsense/coxsense.hpp"

#include <iostream>

using namespace coxsense;

int main(int argc, char** argv) {
    const int rounds = argc > 1 ? std::atoi(argv[1]) : 100;
    const int seeds = argc > 2 ? std::atoi(argv[2]) : 3;

    const Domain D = Domain::interval(-1.0, 1.0);
    const KernelSpec k = se_kernel(D, 0.1);
    auto basis = std::make_shared<const BasisModel>(gamma_transform(build_hat_basis(D, 64), k, 0.1));
    const SensingContext ctx = make_sensing_context(basis, build_action_set(D, 7, false), CostModel{}, 5.0);
    const GroundTruth truth = make_ground_truth(toy_intensity, ctx);

    SuiteSpec spec;
    spec.algorithms = {Algorithm::thompson, Algorithm::random};
    for (int s = 1; s <= seeds; ++s) spec.seeds.push_back(static_cast<std::uint64_t>(s));
    spec.base.max_rounds = rounds;
    const SuiteResult res = run_suite(ctx, truth, spec);

    for (const auto& [alg, entry] : res.summary["algorithms"].items())
        std::cout << alg << ": median cumulative regret after " << entry["final_round"] << " rounds = "
                  << entry["median"]["cum_count_regret"] << "\n";
    return 0;
}
