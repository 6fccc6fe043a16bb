#include "sfda/data.hpp"

#include "sfda/binary_io.hpp"
#include "sfda/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sfda {

void FeatureDataset::validate() const {
    if (features.rows() < 1 || features.cols() < 1) {
        throw InvalidArgument("dataset needs N >= 1 and d >= 1");
    }
    if (num_classes < 1) {
        throw InvalidArgument("dataset needs at least one class");
    }
    if (!features.allFinite()) {
        throw InvalidArgument("dataset features must be finite");
    }
    if (labels) {
        if (labels->size() != size()) {
            throw InvalidArgument("label count does not match sample count");
        }
        for (int y : *labels) {
            if (y < 0 || y >= num_classes) {
                throw InvalidArgument("label " + std::to_string(y) + " outside [0, " +
                                      std::to_string(num_classes) + ")");
            }
        }
    }
}

void FeatureDataset::validate_as_source() const {
    validate();
    require_labels("source dataset");
    const auto counts = class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) {
            throw InvalidArgument("source dataset has no sample of class " + std::to_string(c));
        }
    }
}

const std::vector<int>& FeatureDataset::require_labels(const char* context) const {
    if (!labels) {
        throw InvalidArgument(std::string(context) + " requires a labeled dataset");
    }
    return *labels;
}

std::vector<std::size_t> FeatureDataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
    if (labels) {
        for (int y : *labels) {
            ++counts[static_cast<std::size_t>(y)];
        }
    }
    return counts;
}

FeatureView FeatureDataset::unlabeled_view() const { return FeatureView(features, num_classes); }

Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& indices) {
    Matrix out(static_cast<Eigen::Index>(indices.size()), x.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(indices[r]));
    }
    return out;
}

FeatureDataset subset(const FeatureDataset& ds, const std::vector<std::size_t>& indices) {
    FeatureDataset out;
    out.features = gather_rows(ds.features, indices);
    out.num_classes = ds.num_classes;
    out.domain_name = ds.domain_name;
    if (ds.labels) {
        std::vector<int> y(indices.size());
        for (std::size_t r = 0; r < indices.size(); ++r) {
            y[r] = (*ds.labels)[indices[r]];
        }
        out.labels = std::move(y);
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_dataset(const FeatureDataset& ds) {
    ds.validate();
    io::ByteWriter w;
    w.magic("TABF");
    w.u32(kDatasetFormatVersion);
    w.u32(static_cast<std::uint32_t>(ds.size()));
    w.u32(static_cast<std::uint32_t>(ds.dim()));
    w.u32(static_cast<std::uint32_t>(ds.num_classes));
    w.u8(ds.labeled() ? 1 : 0);
    w.zeros(3);
    for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
        for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
            w.f32(static_cast<float>(ds.features(i, j)));
        }
    }
    if (ds.labels) {
        for (int y : *ds.labels) {
            w.i32(y);
        }
    }
    return w.bytes();
}

FeatureDataset decode_dataset(std::vector<std::uint8_t> bytes) {
    io::ByteReader r(std::move(bytes));
    r.expect_magic("TABF");
    const std::size_t version_at = r.offset();
    const std::uint32_t version = r.u32();
    if (version != kDatasetFormatVersion) {
        throw FormatError("unsupported dataset version " + std::to_string(version), version_at);
    }
    const std::size_t dims_at = r.offset();
    const std::uint32_t n = r.u32();
    const std::uint32_t d = r.u32();
    const std::uint32_t c = r.u32();
    if (n == 0 || d == 0 || c == 0) {
        throw FormatError("dataset header declares an empty dimension", dims_at);
    }
    const std::size_t flag_at = r.offset();
    const std::uint8_t has_labels = r.u8();
    if (has_labels > 1) {
        throw FormatError("has_labels flag must be 0 or 1", flag_at);
    }
    r.skip(3);

    const std::uint64_t feature_bytes = std::uint64_t{n} * d * 4;
    r.require(feature_bytes, "features");
    FeatureDataset ds;
    ds.num_classes = static_cast<int>(c);
    ds.features.resize(n, d);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t j = 0; j < d; ++j) {
            ds.features(i, j) = static_cast<double>(r.f32());
        }
    }
    if (has_labels) {
        r.require(std::uint64_t{n} * 4, "labels");
        std::vector<int> y(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::size_t at = r.offset();
            y[i] = r.i32();
            if (y[i] < 0 || y[i] >= static_cast<int>(c)) {
                throw FormatError("label " + std::to_string(y[i]) + " out of range", at);
            }
        }
        ds.labels = std::move(y);
    }
    r.expect_end();
    return ds;
}

std::filesystem::path manifest_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".json");
}

void save_dataset(const FeatureDataset& ds, const std::filesystem::path& path) {
    io::write_file(path, encode_dataset(ds));
    nlohmann::ordered_json manifest = {
        {"name", ds.domain_name},
        {"n", ds.size()},
        {"d", ds.dim()},
        {"c", ds.num_classes},
        {"labeled", ds.labeled()},
    };
    io::write_text(manifest_path(path), manifest.dump(2) + "\n");
}

FeatureDataset load_dataset(const std::filesystem::path& path) {
    FeatureDataset ds = decode_dataset(io::read_file(path));
    // The name lives only in the manifest; the binary file stays authoritative for data.
    std::error_code ec;
    if (std::filesystem::exists(manifest_path(path), ec)) {
        try {
            const auto bytes = io::read_file(manifest_path(path));
            const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
            ds.domain_name = j.value("name", std::string{});
        } catch (const std::exception&) {
            ds.domain_name.clear();
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------

void SynthShiftConfig::validate() const {
    if (num_classes < 1) throw InvalidArgument("synth.num_classes must be >= 1");
    if (feature_dim < 1) throw InvalidArgument("synth.feature_dim must be >= 1");
    if (samples_per_class_source < 1) throw InvalidArgument("synth.samples_per_class_source must be >= 1");
    if (samples_per_class_target < 1) throw InvalidArgument("synth.samples_per_class_target must be >= 1");
    if (!(cluster_stddev >= 0.0) || !std::isfinite(cluster_stddev))
        throw InvalidArgument("synth.cluster_stddev must be finite and >= 0");
    if (!(noise_scale_target >= 0.0) || !std::isfinite(noise_scale_target))
        throw InvalidArgument("synth.noise_scale_target must be finite and >= 0");
    if (!std::isfinite(rotation_angle)) throw InvalidArgument("synth.rotation_angle must be finite");
    if (!(translation_scale >= 0.0) || !std::isfinite(translation_scale))
        throw InvalidArgument("synth.translation_scale must be finite and >= 0");
}

namespace {

Vector random_unit(Rng& rng, Eigen::Index d) {
    Vector v(d);
    double n = 0.0;
    while (n < 1e-12) {
        for (Eigen::Index j = 0; j < d; ++j) {
            v(j) = rng.normal();
        }
        n = v.norm();
    }
    return v / n;
}

double to_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

FeatureDataset sample_clusters(const Matrix& means, int per_class, double stddev, Rng& rng,
                               std::string name) {
    const Eigen::Index c = means.rows();
    const Eigen::Index d = means.cols();
    FeatureDataset ds;
    ds.num_classes = static_cast<int>(c);
    ds.domain_name = std::move(name);
    ds.features.resize(c * per_class, d);
    std::vector<int> y(static_cast<std::size_t>(c * per_class));
    Eigen::Index row = 0;
    for (Eigen::Index k = 0; k < c; ++k) {
        for (int s = 0; s < per_class; ++s, ++row) {
            for (Eigen::Index j = 0; j < d; ++j) {
                ds.features(row, j) = to_f32(means(k, j) + stddev * rng.normal());
            }
            y[static_cast<std::size_t>(row)] = static_cast<int>(k);
        }
    }
    ds.labels = std::move(y);
    return ds;
}

} // namespace

DomainPair synth_domain_pair(const SynthShiftConfig& cfg) {
    cfg.validate();
    const Rng root(cfg.seed);
    const Eigen::Index c = cfg.num_classes;
    const Eigen::Index d = cfg.feature_dim;

    Rng mean_rng = root.fork("means");
    Matrix means(c, d);
    for (Eigen::Index k = 0; k < c; ++k) {
        means.row(k) = random_unit(mean_rng, d).transpose();
    }

    // Plane-wise rotation: pair up coordinates through a random permutation.
    Rng shift_rng = root.fork("shift");
    const std::vector<std::size_t> perm = shift_rng.permutation(static_cast<std::size_t>(d));
    Matrix shifted = means;
    const double cs = std::cos(cfg.rotation_angle);
    const double sn = std::sin(cfg.rotation_angle);
    for (std::size_t p = 0; p + 1 < perm.size(); p += 2) {
        const auto a = static_cast<Eigen::Index>(perm[p]);
        const auto b = static_cast<Eigen::Index>(perm[p + 1]);
        for (Eigen::Index k = 0; k < c; ++k) {
            const double xa = means(k, a);
            const double xb = means(k, b);
            shifted(k, a) = cs * xa - sn * xb;
            shifted(k, b) = sn * xa + cs * xb;
        }
    }
    const Vector translation = cfg.translation_scale * random_unit(shift_rng, d);
    shifted.rowwise() += translation.transpose();

    Rng source_rng = root.fork("source");
    Rng target_rng = root.fork("target");
    return DomainPair{
        sample_clusters(means, cfg.samples_per_class_source, cfg.cluster_stddev, source_rng, "source"),
        sample_clusters(shifted, cfg.samples_per_class_target, cfg.noise_scale_target, target_rng,
                        "target"),
    };
}

// ---------------------------------------------------------------------------

Split split(const FeatureDataset& ds, double train_fraction, Rng& rng) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw InvalidArgument("split: train_fraction must lie in (0, 1)");
    }
    const auto& y = ds.require_labels("split");
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
    for (std::size_t i = 0; i < y.size(); ++i) {
        by_class[static_cast<std::size_t>(y[i])].push_back(i);
    }
    Split out;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        if (members.empty()) {
            continue;
        }
        if (members.size() < 2) {
            throw InvalidArgument("split: class " + std::to_string(c) +
                                  " has fewer than 2 samples, cannot stratify");
        }
        rng.shuffle(members);
        const double exact = train_fraction * static_cast<double>(members.size());
        // The epsilon keeps 0.85 * 100 from rounding up to 86.
        auto n_train = static_cast<std::size_t>(std::ceil(exact - 1e-9));
        n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
        out.train_indices.insert(out.train_indices.end(), members.begin(),
                                 members.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.val_indices.insert(out.val_indices.end(),
                               members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
    }
    out.train = subset(ds, out.train_indices);
    out.val = subset(ds, out.val_indices);
    return out;
}

std::size_t batch_count(std::size_t n, std::size_t batch_size, bool drop_singletons) {
    if (batch_size < 2) {
        throw InvalidArgument("batch_size must be >= 2");
    }
    const std::size_t full = n / batch_size;
    const std::size_t rest = n % batch_size;
    if (rest == 0) return full;
    if (rest == 1 && drop_singletons) return full;
    return full + 1;
}

BatchPlan make_batches(std::size_t n, std::size_t batch_size, bool shuffle, bool drop_singletons,
                       Rng& rng) {
    if (n < 1) {
        throw InvalidArgument("make_batches: N must be >= 1");
    }
    if (batch_size < 2) {
        throw InvalidArgument("make_batches: batch_size must be >= 2");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) {
        rng.shuffle(order);
    }
    BatchPlan plan;
    plan.batch_size = batch_size;
    plan.drop_singletons = drop_singletons;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(n, start + batch_size);
        if (stop - start == 1 && drop_singletons) {
            break;
        }
        plan.batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                                  order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return plan;
}

} // namespace sfda
