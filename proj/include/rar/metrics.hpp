#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rar/image.hpp"

namespace rar {

// Zero-MSE convention: identical inputs report the cap instead of infinity so
// aggregate statistics stay finite.
constexpr double kPsnrCap = 99.0;

inline double psnr(const Image& a, const Image& b) {
    a.require_same_shape(b, "psnr");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(a.numel());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// dynamic range 1. Windows are evaluated at fully interior positions and the
// score is averaged over channels.
inline double ssim(const Image& a, const Image& b) {
    a.require_same_shape(b, "ssim");
    const int H = a.shape[0], W = a.shape[1], C = a.shape[2];
    constexpr int kWin = 11;
    if (H < kWin || W < kWin)
        throw std::invalid_argument("ssim: image " + shape_str(a.shape) + " smaller than 11x11 window");

    static const std::vector<double> win = [] {
        std::vector<double> w(kWin * kWin);
        const double sigma = 1.5;
        double sum = 0.0;
        for (int y = 0; y < kWin; ++y)
            for (int x = 0; x < kWin; ++x) {
                const double dy = y - (kWin - 1) / 2.0, dx = x - (kWin - 1) / 2.0;
                w[static_cast<std::size_t>(y) * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                sum += w[static_cast<std::size_t>(y) * kWin + x];
            }
        for (auto& v : w) v /= sum;
        return w;
    }();

    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    double total = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < C; ++c)
        for (int y = 0; y + kWin <= H; ++y)
            for (int x = 0; x + kWin <= W; ++x) {
                double mu_a = 0.0, mu_b = 0.0;
                for (int wy = 0; wy < kWin; ++wy)
                    for (int wx = 0; wx < kWin; ++wx) {
                        const double wgt = win[static_cast<std::size_t>(wy) * kWin + wx];
                        mu_a += wgt * a[(static_cast<std::size_t>(y + wy) * W + (x + wx)) * C + c];
                        mu_b += wgt * b[(static_cast<std::size_t>(y + wy) * W + (x + wx)) * C + c];
                    }
                double var_a = 0.0, var_b = 0.0, cov = 0.0;
                for (int wy = 0; wy < kWin; ++wy)
                    for (int wx = 0; wx < kWin; ++wx) {
                        const double wgt = win[static_cast<std::size_t>(wy) * kWin + wx];
                        const double da = a[(static_cast<std::size_t>(y + wy) * W + (x + wx)) * C + c] - mu_a;
                        const double db = b[(static_cast<std::size_t>(y + wy) * W + (x + wx)) * C + c] - mu_b;
                        var_a += wgt * da * da;
                        var_b += wgt * db * db;
                        cov += wgt * da * db;
                    }
                const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                total += num / den;
                ++count;
            }
    return total / static_cast<double>(count);
}

struct MetricReport {
    std::vector<std::string> sample_ids;
    std::vector<double> psnr_values;
    std::vector<double> ssim_values;

    void add(const std::string& id, double p, double s) {
        sample_ids.push_back(id);
        psnr_values.push_back(p);
        ssim_values.push_back(s);
    }

    static double mean(const std::vector<double>& v) {
        double acc = 0.0;
        for (double x : v) acc += x;
        return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
    }

    static double stddev(const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        const double m = mean(v);
        double acc = 0.0;
        for (double x : v) acc += (x - m) * (x - m);
        return std::sqrt(acc / static_cast<double>(v.size()));
    }

    // header + one row per sample + aggregate row
    void write_csv(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("MetricReport: cannot open '" + path + "'");
        os << "sample,psnr_db,ssim\n";
        os << std::setprecision(10);
        for (std::size_t i = 0; i < sample_ids.size(); ++i)
            os << sample_ids[i] << "," << psnr_values[i] << "," << ssim_values[i] << "\n";
        os << "aggregate_mean," << mean(psnr_values) << "," << mean(ssim_values) << "\n";
        os << "aggregate_std," << stddev(psnr_values) << "," << stddev(ssim_values) << "\n";
    }
};

}  // namespace rar
