// Runs the acceptance criteria at their stated tolerances and prints one
// pass/fail line per criterion.

#include <cstdio>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vital/acceptance.hpp"

using namespace vital;

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::uint64_t seed = 7;
    std::string out_dir;
    double determinism_budget = 1.0;
    bool quick = false;
    bool report_only = false;
    std::vector<int> known_red;
    app.add_option("--seed", seed, "experiment seed");
    app.add_option("--out", out_dir, "artifact directory for the full report");
    app.add_option("--determinism-budget", determinism_budget, "minutes per reproduce_all run in criterion 12");
    app.add_flag("--quick", quick, "only the criteria that need no training");
    app.add_flag("--report-only", report_only, "exit 0 even when a criterion fails");
    app.add_option("--known-red", known_red,
                   "criteria documented as unmet at desk scale; still reported, not counted toward the exit code")
        ->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    std::vector<CriterionResult> results;
    auto emit = [&](CriterionResult r) {
        std::cout << format_line(r) << std::endl;
        results.push_back(std::move(r));
    };

    try {
        if (quick) {
            emit(check_gradient(seed));
            emit(check_cache_equivalence(seed));
            emit(check_parity(seed));
            emit(check_plug_and_play(seed));
            emit(check_roi_pipeline(seed));
            emit(check_quality_gate(seed));
            emit(check_metric_oracles());
        } else {
            DeskConfig cfg;
            cfg.seed = seed;
            Report rep = reproduce_all(cfg, out_dir);
            for (const auto& c : rep.criteria)
                if (c.id != 12) emit(c);
            DeskConfig small = DeskConfig::for_budget(determinism_budget);
            small.seed = seed;
            emit(check_determinism(small));
        }
    } catch (const std::exception& e) {
        std::cerr << "acceptance run aborted: " << e.what() << '\n';
        return 1;
    }

    std::size_t passed = 0;
    for (const auto& r : results) passed += r.passed;
    std::cout << passed << "/" << results.size() << " criteria passed" << std::endl;
    const std::set<int> excused(known_red.begin(), known_red.end());
    bool ok = true;
    for (const auto& r : results) {
        if (r.passed) continue;
        if (excused.count(r.id)) {
            std::cout << "criterion " << r.id << " failed and is listed as known red" << std::endl;
        } else {
            ok = false;
        }
    }
    return ok || report_only ? 0 : 1;
}
