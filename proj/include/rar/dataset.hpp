#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rar/degrade.hpp"
#include "rar/image.hpp"
#include "rar/rng.hpp"

namespace rar {

struct Dataset {
    std::vector<LabeledSample> samples;

    std::vector<LabeledSample> by_group(GroupTag g) const {
        std::vector<LabeledSample> out;
        for (const auto& s : samples)
            if (s.spec.group == g) out.push_back(s);
        return out;
    }

    std::vector<Image> clean_images() const {
        std::vector<Image> out;
        out.reserve(samples.size());
        for (const auto& s : samples) out.push_back(s.clean);
        return out;
    }
};

// Groups cycle Single, A, B, C so every group gets count/4 samples.
inline Dataset gen_dataset(std::uint64_t seed, int count, int image_size) {
    Dataset ds;
    Rng root(seed);
    Rng spec_rng = root.derive("dataset.specs");
    Rng apply_rng = root.derive("dataset.apply");
    const auto cleans = gen_clean(root.derive("dataset.clean").next_u64(), count, image_size);
    for (int i = 0; i < count; ++i) {
        LabeledSample s;
        s.clean = cleans[static_cast<std::size_t>(i)];
        const auto group = static_cast<GroupTag>(i % kNumGroups);
        s.spec = sample_spec(group, spec_rng.derive(static_cast<std::uint64_t>(i)).next_u64());
        s.apply_seed = apply_rng.derive(static_cast<std::uint64_t>(i)).next_u64();
        s.degraded = apply_composite(s.clean, s.spec, s.apply_seed);
        s.label = s.spec.multi_hot();
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

// Line-oriented manifest, one sample per line:
//   <idx> <clean_file> <degraded_file> <group> <spec> <apply_seed>
// with image files stored next to the manifest.
inline void save_dataset(const Dataset& ds, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream os(dir + "/manifest.txt");
    if (!os) throw std::runtime_error("save_dataset: cannot write manifest in '" + dir + "'");
    os << "rar-dataset-v1\n";
    os << "count=" << ds.samples.size() << "\n";
    char name[64];
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        std::snprintf(name, sizeof(name), "clean_%04zu.ppm", i);
        const std::string clean_name = name;
        std::snprintf(name, sizeof(name), "deg_%04zu.ppm", i);
        const std::string deg_name = name;
        write_ppm(dir + "/" + clean_name, s.clean);
        write_ppm(dir + "/" + deg_name, s.degraded);
        os << i << " " << clean_name << " " << deg_name << " " << group_name(s.spec.group) << " "
           << spec_to_string(s.spec) << " " << s.apply_seed << "\n";
    }
}

inline Dataset load_dataset(const std::string& dir) {
    std::ifstream is(dir + "/manifest.txt");
    if (!is) throw std::runtime_error("load_dataset: cannot open '" + dir + "/manifest.txt'");
    std::string line;
    if (!std::getline(is, line) || line != "rar-dataset-v1")
        throw std::runtime_error("load_dataset: unrecognized manifest header");
    if (!std::getline(is, line) || line.rfind("count=", 0) != 0)
        throw std::runtime_error("load_dataset: missing count line");
    Dataset ds;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t idx;
        std::string clean_name, deg_name, group, spec_text;
        std::uint64_t apply_seed;
        if (!(ls >> idx >> clean_name >> deg_name >> group >> spec_text >> apply_seed))
            throw std::runtime_error("load_dataset: malformed line '" + line + "'");
        LabeledSample s;
        s.clean = read_ppm(dir + "/" + clean_name);
        s.degraded = read_ppm(dir + "/" + deg_name);
        s.spec = spec_from_string(spec_text, group_from_name(group));
        s.label = s.spec.multi_hot();
        s.apply_seed = apply_seed;
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace rar
