#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rar/dataset.hpp"
#include "rar/metrics.hpp"
#include "rar/rar_loop.hpp"

namespace rar {

enum class EvalMode { kAdaptive, kFixed, kOracleStop };

struct EvalOptions {
    EvalMode mode = EvalMode::kAdaptive;
    int fixed_rounds = 4;
    RarConfig rar;
};

struct GroupStats {
    GroupTag group = GroupTag::kSingle;
    int count = 0;
    double avg_rounds = 0.0;
    double frac_verdict_stop = 0.0;
    double frac_budget = 0.0;
    double psnr_degraded = 0.0, psnr_restored = 0.0, psnr_recon = 0.0;
    double ssim_degraded = 0.0, ssim_restored = 0.0, ssim_recon = 0.0;
};

struct SampleResult {
    std::string id;
    GroupTag group = GroupTag::kSingle;
    int rounds = 0;
    StopReason reason = StopReason::kBudgetExhausted;
    double psnr_degraded = 0.0, psnr_restored = 0.0, psnr_recon = 0.0;
    double ssim_degraded = 0.0, ssim_restored = 0.0, ssim_recon = 0.0;
};

struct EvalSummary {
    std::vector<SampleResult> samples;
    std::vector<GroupStats> groups;  // always 4 rows: Single, A, B, C
};

// Restores every test sample and aggregates fidelity per group, alongside the
// degraded-input and codec-reconstruction baselines and rounds statistics.
inline EvalSummary eval_suite(const std::vector<LabeledSample>& testset, Codec& codec, Lqa& lqa, Uir& uir,
                              const EvalOptions& opt) {
    if (testset.empty()) throw std::invalid_argument("eval_suite: empty test set");
    EvalSummary summary;
    for (std::size_t i = 0; i < testset.size(); ++i) {
        const auto& s = testset[i];
        RarResult rr;
        switch (opt.mode) {
            case EvalMode::kAdaptive:
                rr = rar_infer(s.degraded, codec, lqa, uir, opt.rar);
                break;
            case EvalMode::kFixed:
                rr = rar_infer_fixed(s.degraded, codec, lqa, uir, opt.fixed_rounds, opt.rar);
                break;
            case EvalMode::kOracleStop: {
                RarConfig cfg = opt.rar;
                cfg.delta = 1e30;  // margin can never clear it: first verdict stops
                rr = rar_infer(s.degraded, codec, lqa, uir, cfg);
                break;
            }
        }
        const Image recon = decode(codec, encode(codec, s.clean));
        SampleResult r;
        std::ostringstream id;
        id << "sample_" << std::setw(4) << std::setfill('0') << i;
        r.id = id.str();
        r.group = s.spec.group;
        r.rounds = rr.rounds_executed;
        r.reason = rr.reason;
        r.psnr_degraded = psnr(s.degraded, s.clean);
        r.psnr_restored = psnr(rr.restored, s.clean);
        r.psnr_recon = psnr(recon, s.clean);
        r.ssim_degraded = ssim(s.degraded, s.clean);
        r.ssim_restored = ssim(rr.restored, s.clean);
        r.ssim_recon = ssim(recon, s.clean);
        summary.samples.push_back(std::move(r));
    }
    for (int g = 0; g < kNumGroups; ++g) {
        GroupStats gs;
        gs.group = static_cast<GroupTag>(g);
        for (const auto& r : summary.samples) {
            if (r.group != gs.group) continue;
            gs.count += 1;
            gs.avg_rounds += r.rounds;
            gs.frac_verdict_stop += r.reason == StopReason::kVerdictStop ? 1.0 : 0.0;
            gs.frac_budget += r.reason == StopReason::kBudgetExhausted ? 1.0 : 0.0;
            gs.psnr_degraded += r.psnr_degraded;
            gs.psnr_restored += r.psnr_restored;
            gs.psnr_recon += r.psnr_recon;
            gs.ssim_degraded += r.ssim_degraded;
            gs.ssim_restored += r.ssim_restored;
            gs.ssim_recon += r.ssim_recon;
        }
        if (gs.count > 0) {
            const double n = gs.count;
            gs.avg_rounds /= n;
            gs.frac_verdict_stop /= n;
            gs.frac_budget /= n;
            gs.psnr_degraded /= n;
            gs.psnr_restored /= n;
            gs.psnr_recon /= n;
            gs.ssim_degraded /= n;
            gs.ssim_restored /= n;
            gs.ssim_recon /= n;
        }
        summary.groups.push_back(gs);
    }
    return summary;
}

inline void write_eval_csvs(const EvalSummary& summary, const std::string& samples_csv,
                            const std::string& groups_csv) {
    {
        std::ofstream os(samples_csv);
        if (!os) throw std::runtime_error("write_eval_csvs: cannot open '" + samples_csv + "'");
        os << std::setprecision(10);
        os << "sample,group,rounds,stop_reason,psnr_degraded,psnr_restored,psnr_recon,"
              "ssim_degraded,ssim_restored,ssim_recon\n";
        for (const auto& r : summary.samples)
            os << r.id << "," << group_name(r.group) << "," << r.rounds << "," << stop_reason_name(r.reason) << ","
               << r.psnr_degraded << "," << r.psnr_restored << "," << r.psnr_recon << "," << r.ssim_degraded << ","
               << r.ssim_restored << "," << r.ssim_recon << "\n";
    }
    {
        std::ofstream os(groups_csv);
        if (!os) throw std::runtime_error("write_eval_csvs: cannot open '" + groups_csv + "'");
        os << std::setprecision(10);
        os << "group,count,avg_rounds,frac_verdict_stop,frac_budget,psnr_degraded,psnr_restored,psnr_recon,"
              "ssim_degraded,ssim_restored,ssim_recon\n";
        for (const auto& g : summary.groups)
            os << group_name(g.group) << "," << g.count << "," << g.avg_rounds << "," << g.frac_verdict_stop << ","
               << g.frac_budget << "," << g.psnr_degraded << "," << g.psnr_restored << "," << g.psnr_recon << ","
               << g.ssim_degraded << "," << g.ssim_restored << "," << g.ssim_recon << "\n";
    }
}

}  // namespace rar
