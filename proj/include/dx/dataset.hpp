#pragma once

#include "dx/tensor.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dx {

/// Half-open pixel box [row0,row1) x [col0,col1).
struct BBox {
    int row0 = 0, col0 = 0, row1 = 0, col1 = 0;

    bool operator==(const BBox&) const = default;
    long area() const { return static_cast<long>(row1 - row0) * (col1 - col0); }
    void validate(int h, int w) const {
        if (!(0 <= row0 && row0 < row1 && row1 <= h && 0 <= col0 && col0 < col1 && col1 <= w))
            throw std::invalid_argument("invalid bounding box");
    }
};

struct Sample {
    Tensor image;
    int label = 0;  // 0 healthy, 1 pathological
    std::vector<BBox> boxes;
};

struct Dataset {
    int height = 0, width = 0, channels = 0;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    double pathological_fraction() const {
        std::size_t n = 0;
        for (const auto& s : samples) n += s.label;
        return samples.empty() ? 0.0 : static_cast<double>(n) / samples.size();
    }
};

struct DatasetSpec {
    int count = 0;
    int height = 32, width = 32, channels = 1;
    double pathological_fraction = 0.45;
    int blob_count_min = 1, blob_count_max = 2;
    int blob_radius_min = 3, blob_radius_max = 7;
    double blob_intensity_min = 0.25, blob_intensity_max = 0.6;
    double background_texture_scale = 0.15;
    std::uint64_t seed = 0;

    void validate() const {
        auto fail = [](const std::string& field, const std::string& why) {
            throw std::invalid_argument("invalid dataset spec: field '" + field + "' " + why);
        };
        if (count <= 0) fail("count", "must be positive");
        if (height <= 0 || width <= 0) fail("height/width", "must be positive");
        if (channels <= 0) fail("channels", "must be positive");
        if (!(pathological_fraction > 0.0 && pathological_fraction < 1.0))
            fail("pathological_fraction", "must lie in (0,1)");
        if (blob_count_min < 1 || blob_count_max < blob_count_min) fail("blob_count_range", "must be a positive interval");
        if (blob_radius_min < 1 || blob_radius_max < blob_radius_min) fail("blob_radius_range", "must be a positive interval");
        if (2 * blob_radius_max >= std::min(height, width))
            fail("blob_radius_range", "does not fit the image: 2*max_radius must be < min(height, width)");
        if (!(blob_intensity_min > 0.0 && blob_intensity_max <= 1.0 && blob_intensity_min <= blob_intensity_max))
            fail("blob_intensity_range", "must be an interval in (0,1]");
        if (background_texture_scale < 0.0) fail("background_texture_scale", "must be >= 0");
        long k = std::lround(pathological_fraction * count);
        if (k < 1 || k > count - 1)
            fail("pathological_fraction", "rounds to an empty class for this count");
    }
};

namespace detail {

inline double quantize16(double v) {
    double q = std::lround(std::min(std::max(v, 0.0), 1.0) * 65535.0);
    return q / 65535.0;
}

/// Smooth background: base level plus bilinearly upsampled coarse noise.
inline void fill_background(Tensor& img, std::mt19937_64& rng, double scale) {
    constexpr int gh = 5, gw = 5;
    for (int ch = 0; ch < img.c; ++ch) {
        std::array<double, gh * gw> grid;
        for (double& g : grid) g = uniform_in(rng, -1.0, 1.0);
        for (int r = 0; r < img.h; ++r)
            for (int c = 0; c < img.w; ++c) {
                double fy = static_cast<double>(r) / (img.h - 1) * (gh - 1);
                double fx = static_cast<double>(c) / (img.w - 1) * (gw - 1);
                int y0 = std::min(static_cast<int>(fy), gh - 2), x0 = std::min(static_cast<int>(fx), gw - 2);
                double ty = fy - y0, tx = fx - x0;
                double n = grid[y0 * gw + x0] * (1 - ty) * (1 - tx) + grid[y0 * gw + x0 + 1] * (1 - ty) * tx +
                           grid[(y0 + 1) * gw + x0] * ty * (1 - tx) + grid[(y0 + 1) * gw + x0 + 1] * ty * tx;
                img.at(ch, r, c) = 0.4 + scale * n;
            }
    }
}

/// Adds one compact-support elliptical bump and returns its tight box.
inline BBox add_blob(Tensor& img, std::mt19937_64& rng, const DatasetSpec& spec) {
    double ra = uniform_in(rng, spec.blob_radius_min, spec.blob_radius_max);
    double rb = uniform_in(rng, spec.blob_radius_min, spec.blob_radius_max);
    double theta = uniform_in(rng, 0.0, 3.14159265358979323846);
    double amp = uniform_in(rng, spec.blob_intensity_min, spec.blob_intensity_max);
    double rmax = std::max(ra, rb);
    double cy = uniform_in(rng, rmax, spec.height - 1 - rmax);
    double cx = uniform_in(rng, rmax, spec.width - 1 - rmax);

    const double ct = std::cos(theta), st = std::sin(theta);
    int lo_r = spec.height, hi_r = -1, lo_c = spec.width, hi_c = -1;
    for (int r = 0; r < spec.height; ++r)
        for (int c = 0; c < spec.width; ++c) {
            double dy = r - cy, dx = c - cx;
            double u = (ct * dy + st * dx) / ra;
            double v = (-st * dy + ct * dx) / rb;
            double rho2 = u * u + v * v;
            if (rho2 >= 1.0) continue;
            double bump = amp * std::pow(1.0 - rho2, 1.5);
            for (int ch = 0; ch < img.c; ++ch) img.at(ch, r, c) += bump;
            lo_r = std::min(lo_r, r);
            hi_r = std::max(hi_r, r);
            lo_c = std::min(lo_c, c);
            hi_c = std::max(hi_c, c);
        }
    // Compact support plus in-frame center guarantee a non-degenerate box.
    return BBox{lo_r, lo_c, hi_r + 1, hi_c + 1};
}

}  // namespace detail

inline BinaryMask gt_mask(const std::vector<BBox>& boxes, int h, int w) {
    BinaryMask m(h, w);
    for (const BBox& b : boxes) {
        b.validate(h, w);
        for (int r = b.row0; r < b.row1; ++r)
            for (int c = b.col0; c < b.col1; ++c) m.at(r, c) = 1;
    }
    return m;
}

inline Dataset generate_dataset(const DatasetSpec& spec) {
    spec.validate();
    Dataset ds;
    ds.height = spec.height;
    ds.width = spec.width;
    ds.channels = spec.channels;
    ds.samples.resize(spec.count);

    // Label assignment: seeded shuffle of the exact class counts.
    const long n_path = std::lround(spec.pathological_fraction * spec.count);
    std::vector<int> labels(spec.count, 0);
    std::fill(labels.begin(), labels.begin() + n_path, 1);
    std::mt19937_64 label_rng(spec.seed ^ 0x6c6162656c736565ull);
    for (int i = spec.count - 1; i > 0; --i)
        std::swap(labels[i], labels[uniform_int_in(label_rng, 0, i)]);

    for (int i = 0; i < spec.count; ++i) {
        // Per-sample stream: independent of generation order.
        std::mt19937_64 rng(spec.seed + 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(i) + 1));
        Sample& s = ds.samples[i];
        s.label = labels[i];
        s.image = Tensor(spec.channels, spec.height, spec.width);
        detail::fill_background(s.image, rng, spec.background_texture_scale);
        if (s.label == 1) {
            int nblobs = static_cast<int>(uniform_int_in(rng, spec.blob_count_min, spec.blob_count_max));
            for (int b = 0; b < nblobs; ++b) s.boxes.push_back(detail::add_blob(s.image, rng, spec));
        }
        for (double& p : s.image.v) p = detail::quantize16(p);
    }
    return ds;
}

namespace detail {

/// Largest-remainder allocation of `total` seats to per-class populations.
inline std::vector<long> allocate_quota(const std::vector<long>& pop, long total) {
    long n = std::accumulate(pop.begin(), pop.end(), 0L);
    std::vector<long> q(pop.size());
    std::vector<std::pair<double, std::size_t>> rem;
    long given = 0;
    for (std::size_t c = 0; c < pop.size(); ++c) {
        double exact = static_cast<double>(total) * pop[c] / n;
        q[c] = static_cast<long>(exact);
        given += q[c];
        rem.push_back({exact - q[c], c});
    }
    std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (long i = 0; i < total - given; ++i) q[rem[static_cast<std::size_t>(i)].second] += 1;
    return q;
}

}  // namespace detail

/// Stratified, seed-deterministic split. Total split sizes follow the
/// cumulative-rounding of the ratios.
inline std::array<Dataset, 3> split_dataset(const Dataset& ds, std::array<double, 3> ratios, std::uint64_t seed) {
    for (double r : ratios)
        if (!(r > 0.0)) throw std::invalid_argument("split ratios must be positive");
    if (std::fabs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
        throw std::invalid_argument("split ratios must sum to 1");

    const long n = static_cast<long>(ds.size());
    const long n_train = std::lround(ratios[0] * n);
    const long n_val = std::lround((ratios[0] + ratios[1]) * n) - n_train;
    const long n_test = n - n_train - n_val;
    if (n_train < 1 || n_val < 1 || n_test < 1) throw std::invalid_argument("a split would be empty");

    std::vector<std::vector<std::size_t>> by_class(2);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.samples[i].label].push_back(i);
    std::mt19937_64 rng(seed);
    for (auto& idx : by_class)
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[uniform_int_in(rng, 0, static_cast<std::int64_t>(i) - 1)]);

    std::vector<long> pop = {static_cast<long>(by_class[0].size()), static_cast<long>(by_class[1].size())};
    std::vector<long> q_train = detail::allocate_quota(pop, n_train);
    std::vector<long> rest = {pop[0] - q_train[0], pop[1] - q_train[1]};
    std::vector<long> q_val = detail::allocate_quota(rest, n_val);

    std::array<std::vector<std::size_t>, 3> member;
    for (int c = 0; c < 2; ++c) {
        const auto& idx = by_class[c];
        long a = q_train[c], b = a + q_val[c];
        member[0].insert(member[0].end(), idx.begin(), idx.begin() + a);
        member[1].insert(member[1].end(), idx.begin() + a, idx.begin() + b);
        member[2].insert(member[2].end(), idx.begin() + b, idx.end());
    }
    std::array<Dataset, 3> out;
    for (int s = 0; s < 3; ++s) {
        std::sort(member[s].begin(), member[s].end());
        out[s].height = ds.height;
        out[s].width = ds.width;
        out[s].channels = ds.channels;
        for (std::size_t i : member[s]) out[s].samples.push_back(ds.samples[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence: index.json + one 16-bit PGM per sample (channels stacked as
// extra rows; PGM 16-bit payload is MSB-first per the format).
// ---------------------------------------------------------------------------

namespace detail {

inline void write_pgm16(const Tensor& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write image file: " + path);
    os << "P5\n" << img.w << " " << img.h * img.c << "\n65535\n";
    for (double p : img.v) {
        unsigned q = static_cast<unsigned>(std::lround(std::min(std::max(p, 0.0), 1.0) * 65535.0));
        unsigned char b[2] = {static_cast<unsigned char>(q >> 8), static_cast<unsigned char>(q & 0xff)};
        os.write(reinterpret_cast<const char*>(b), 2);
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline Tensor read_pgm16(const std::string& path, int channels) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read image file: " + path);
    std::string magic;
    int w = 0, rows = 0, maxval = 0;
    is >> magic >> w >> rows >> maxval;
    if (magic != "P5" || maxval != 65535 || w <= 0 || rows <= 0 || rows % channels != 0)
        throw std::runtime_error("malformed 16-bit PGM: " + path);
    is.get();  // single whitespace after header
    Tensor img(channels, rows / channels, w);
    for (double& p : img.v) {
        unsigned char b[2];
        is.read(reinterpret_cast<char*>(b), 2);
        p = static_cast<double>((static_cast<unsigned>(b[0]) << 8) | b[1]) / 65535.0;
    }
    if (!is) throw std::runtime_error("truncated image file: " + path);
    return img;
}

}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json index;
    index["format"] = "dx-dataset-v1";
    index["height"] = ds.height;
    index["width"] = ds.width;
    index["channels"] = ds.channels;
    index["samples"] = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "s%05zu.pgm", i);
        const Sample& s = ds.samples[i];
        detail::write_pgm16(s.image, (fs::path(dir) / name).string());
        nlohmann::json rec;
        rec["file"] = name;
        rec["label"] = s.label;
        rec["boxes"] = nlohmann::json::array();
        for (const BBox& b : s.boxes) rec["boxes"].push_back({b.row0, b.col0, b.row1, b.col1});
        index["samples"].push_back(rec);
    }
    std::ofstream os(fs::path(dir) / "index.json");
    os << index.dump(1) << "\n";
    if (!os) throw std::runtime_error("cannot write dataset index in " + dir);
}

inline Dataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::path index_path = fs::path(dir) / "index.json";
    std::ifstream is(index_path);
    if (!is) throw std::runtime_error("missing index: " + index_path.string());
    nlohmann::json index;
    try {
        is >> index;
    } catch (const std::exception& e) {
        throw std::runtime_error("malformed index " + index_path.string() + ": " + e.what());
    }
    Dataset ds;
    ds.height = index.at("height").get<int>();
    ds.width = index.at("width").get<int>();
    ds.channels = index.at("channels").get<int>();
    std::size_t i = 0;
    for (const auto& rec : index.at("samples")) {
        try {
            Sample s;
            std::string file = rec.at("file").get<std::string>();
            s.label = rec.at("label").get<int>();
            for (const auto& jb : rec.at("boxes")) {
                BBox b{jb.at(0).get<int>(), jb.at(1).get<int>(), jb.at(2).get<int>(), jb.at(3).get<int>()};
                b.validate(ds.height, ds.width);
                s.boxes.push_back(b);
            }
            if ((s.label == 1) != !s.boxes.empty())
                throw std::runtime_error("label/box inconsistency");
            s.image = detail::read_pgm16((fs::path(dir) / file).string(), ds.channels);
            if (s.image.h != ds.height || s.image.w != ds.width)
                throw std::runtime_error("image dimensions disagree with index");
            ds.samples.push_back(std::move(s));
        } catch (const std::exception& e) {
            throw std::runtime_error("dataset record " + std::to_string(i) + " in " + index_path.string() +
                                     ": " + e.what());
        }
        ++i;
    }
    return ds;
}

}  // namespace dx
