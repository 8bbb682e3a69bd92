// End-to-end tour: synthesize a city, sample tasks, run the scripted agents,
// and print the report plus a difficulty sweep.
#include <iostream>

#include "citynav/eval.hpp"

int main() {
    using namespace citynav;

    SyntheticSpec spec;
    spec.width = 20;
    spec.height = 20;
    spec.blocked_fraction = 0.1;
    spec.landmark_count = 4;
    spec.target_visible_fraction = 0.5;
    spec.seed = 7;
    const EnvGraph env = gen_synthetic(spec);
    std::cout << "city: " << env.node_ids().size() << " nodes, " << env.landmarks().size()
              << " landmarks\n\n";

    const auto tasks = sample_tasks(env, 10, 15.0, 5.0, 1);

    BatchConfig cfg;
    cfg.kinds = {AgentKind::prep, AgentKind::react, AgentKind::random};
    cfg.profile = profile_from_table(ProfileKind::finetuned, visible_pair_fraction(env));
    cfg.seed = 42;
    const BatchReport report = run_batch(env, tasks, cfg);

    std::cout << render_markdown_table(report) << "\n";
    std::cout << distance_sweep_csv(sweep_by_distance(report));
    return 0;
}
