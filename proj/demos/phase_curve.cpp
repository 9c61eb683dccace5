// Escape probability of the homogeneous (p, p) walk against the closed form.
// usage: demo_phase_curve [replicas] [K]

#include <cstdio>
#include <cstdlib>

#include <cookiewalk/experiments.hpp>

int main(int argc, char** argv)
{
    using namespace cookiewalk;
    McConfig cfg;
    cfg.replicas = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 20000;
    cfg.level = argc > 2 ? std::strtoll(argv[2], nullptr, 10) : 500;
    cfg.master_seed = 1;

    std::vector<double> grid;
    for (int i = 0; i <= 9; ++i)
        grid.push_back(0.55 + 0.05 * i);
    PhaseScanOptions opt;
    opt.exact_K = 32;

    std::printf("%6s %10s %10s %22s %10s\n", "p", "formula", "mc", "95% interval", "exact@32");
    for (const auto& pt : phase_scan(grid, cfg, opt))
        std::printf("%6.2f %10.4f %10.4f   [%8.4f, %8.4f] %10.4f\n", pt.p, pt.predicted, pt.mc.value, pt.mc.lo,
                    pt.mc.hi, pt.exact_bound);
}
