#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "curvinit/config.hpp"
#include "curvinit/curvature.hpp"
#include "curvinit/dataset.hpp"
#include "curvinit/format.hpp"
#include "curvinit/init.hpp"
#include "curvinit/stats.hpp"
#include "curvinit/train.hpp"

namespace curvinit {

/// Comma-delimited, LF-terminated, numbers in shortest round-trip form.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }

    // RFC 4180 quoting: only cells holding a comma, quote or line break
    static std::string quote(const std::string& cell) {
        if (cell.find_first_of(",\"\r\n") == std::string::npos) return cell;
        std::string q = "\"";
        for (char c : cell) {
            if (c == '"') q += '"';
            q += c;
        }
        return q + '"';
    }

    void write(std::ostream& os) const {
        auto line = [&os](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i) os << ',';
                os << quote(cells[i]);
            }
            os << '\n';
        };
        line(header);
        for (const auto& r : rows) line(r);
    }

    std::string str() const {
        std::ostringstream os;
        write(os);
        return os.str();
    }

    std::size_t column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw InvalidInput("no column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    }

    double number(std::size_t row, const std::string& name) const { return parse_double(rows.at(row).at(column(name))); }

    /// Inverse of write(); the first record is the header.
    static CsvTable parse(const std::string& text) {
        std::vector<std::vector<std::string>> records(1);
        std::string cell;
        bool quoted = false, any = false;
        for (std::size_t i = 0; i < text.size(); ++i) {
            const char c = text[i];
            if (quoted) {
                if (c != '"') cell += c;
                else if (i + 1 < text.size() && text[i + 1] == '"') cell += '"', ++i;
                else quoted = false;
            } else if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                records.back().push_back(std::move(cell));
                cell.clear();
            } else if (c == '\n') {
                records.back().push_back(std::move(cell));
                cell.clear();
                records.emplace_back();
            } else if (c != '\r') {
                cell += c;
            }
            any = true;
        }
        if (quoted) throw DataError("unterminated quoted CSV cell");
        if (!cell.empty() || !records.back().empty()) records.back().push_back(std::move(cell));
        if (records.back().empty()) records.pop_back();
        if (!any || records.empty()) throw DataError("empty CSV");
        CsvTable t;
        t.header = std::move(records.front());
        for (std::size_t r = 1; r < records.size(); ++r) {
            if (records[r].size() != t.header.size()) throw DataError("CSV row " + std::to_string(r) + " has the wrong width");
            t.rows.push_back(std::move(records[r]));
        }
        return t;
    }
};

inline std::string num(double x) { return format_shortest(x); }
inline std::string num(std::size_t x) { return std::to_string(x); }

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw InvalidInput("slope fit needs at least two points");
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) mx += std::log(xs[i]), my += std::log(ys[i]);
    mx /= n, my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = std::log(xs[i]) - mx;
        sxy += dx * (std::log(ys[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

namespace harness {

inline LossKind loss_from(const Config& c, std::size_t d_out) {
    const std::string name = c.str("loss", "ce");
    if (name == "ce") return loss::SoftmaxCrossEntropy{d_out};
    if (name == "mse") return loss::SquaredError{};
    throw ConfigError("loss must be 'ce' or 'mse', got '" + name + "'");
}

/// `layers` lists widths d_0,...,d_n; hidden layers use `act`, the last layer `output_act`.
inline std::vector<LayerSpec> spec_from(const Config& c, const std::vector<std::size_t>& default_widths,
                                        const std::string& default_act, const std::string& default_output_act) {
    const auto widths = c.integers("layers", default_widths);
    if (widths.size() < 2) throw ConfigError("layers needs at least two widths");
    ActivationKind hidden, output;
    try {
        hidden = parse_activation(c.str("act", default_act));
        output = parse_activation(c.str("output_act", default_output_act));
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    std::vector<LayerSpec> spec;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        if (widths[k] == 0 || widths[k + 1] == 0) throw ConfigError("layer widths must be positive");
        spec.push_back({widths[k], widths[k + 1], k + 2 == widths.size() ? output : hidden});
    }
    return spec;
}

inline InitScheme scheme_from(const Config& c, const std::string& fallback = "glorot") {
    try {
        InitScheme s = parse_scheme(c.str("scheme", fallback));
        s.relu_correction = c.flag("relu_correct", false);
        s.dropout_correction = c.flag("dropout_correct", false);
        return s;
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
}

/// Dataset named by `dataset`, already multiplied by `input_scale` for MNIST.
inline Dataset dataset_from(const Config& c, const std::string& fallback, std::size_t d_in, std::size_t d_out) {
    const std::string name = c.str("dataset", fallback);
    const std::uint64_t seed = c.integer("seed", 0);
    if (name == "mnist") {
        const Dataset full = load_mnist_idx(c.path("mnist_images", "data/mnist5k-images-idx3-ubyte"),
                                            c.path("mnist_labels", "data/mnist5k-labels-idx1-ubyte"));
        return full.head(c.integer("mnist_limit", 5000)).scaled(c.real("input_scale", 0.1));
    }
    if (name == "blobs")
        return synth_dataset(SynthKind::Blobs, c.integer("samples", 256), d_in, c.integer("classes", d_out),
                             c.real("input_scale", 0.1), derive_seed(seed, {0xda7au}));
    if (name == "linreg")
        return synth_dataset(SynthKind::LinReg, c.integer("samples", 256), d_in, d_out, c.real("input_scale", 0.1),
                             derive_seed(seed, {0xda7au}));
    throw ConfigError("dataset must be mnist, blobs or linreg, got '" + name + "'");
}

inline void check_dataset(const Dataset& d, const std::vector<LayerSpec>& spec, const LossKind& kind) {
    d.validate();
    if (d.input_dim() != spec.front().d_in)
        throw ConfigError("dataset has " + std::to_string(d.input_dim()) + " features but the first layer expects " +
                          std::to_string(spec.front().d_in));
    if (std::holds_alternative<loss::SoftmaxCrossEntropy>(kind) != d.is_classification())
        throw ConfigError("loss does not match the dataset's target type");
    if (d.is_classification() && d.num_classes > spec.back().d_out)
        throw ConfigError("output layer is narrower than the number of classes");
}

inline Matrix unit_direction(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix g = normal_matrix(rows, cols, 1.0, rng);
    return g / g.norm();
}

/// Contiguous batch with a seeded start offset.
inline Dataset batch_at(const Dataset& d, std::size_t batch, std::uint64_t seed) {
    batch = std::min(batch, d.size());
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, d.size() - batch);
    const std::size_t start = pick(rng);
    Dataset out;
    out.name = d.name;
    out.num_classes = d.num_classes;
    out.inputs = d.inputs.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(batch));
    if (const auto* labels = std::get_if<std::vector<std::size_t>>(&d.targets))
        out.targets = std::vector<std::size_t>(labels->begin() + static_cast<std::ptrdiff_t>(start),
                                               labels->begin() + static_cast<std::ptrdiff_t>(start + batch));
    else
        out.targets = Eigen::MatrixXd(std::get<Eigen::MatrixXd>(d.targets).middleRows(static_cast<Eigen::Index>(start),
                                                                                      static_cast<Eigen::Index>(batch)));
    return out;
}

}  // namespace harness

/// Fraction of probes per layer whose batch-mean approximate quadratic form is
/// within rtol of the finite-difference value, for rtol in {0.5, 1, 1.5}.
/// Every probe re-initializes the network.
inline CsvTable run_approx_error(const Config& c) {
    const auto spec = harness::spec_from(c, {784, 64, 64, 64, 64, 10}, "tanh", "linear");
    const LossKind kind = harness::loss_from(c, spec.back().d_out);
    const Dataset data = harness::dataset_from(c, "mnist", spec.front().d_in, spec.back().d_out);
    harness::check_dataset(data, spec, kind);
    const InitScheme scheme = harness::scheme_from(c);
    const std::size_t probes = c.integer("probes", 100);
    const std::size_t batch = c.integer("batch_size", 32);
    const std::uint64_t seed = c.integer("seed", 0);
    if (probes == 0 || batch == 0) throw ConfigError("probes and batch_size must be positive");

    const std::vector<double> thresholds = {0.5, 1.0, 1.5};
    CsvTable t;
    t.header = {"layer", "rtol_0.5", "rtol_1", "rtol_1.5"};
    for (std::size_t k = 0; k < spec.size(); ++k) {
        std::vector<std::size_t> hits(thresholds.size(), 0);
        std::size_t valid = 0;
        for (std::size_t p = 0; p < probes; ++p) {
            const std::uint64_t ps = derive_seed(seed, {0xae0u, k, p});
            const Network net = initialize(spec, scheme, derive_seed(ps, {0}));
            const Dataset b = harness::batch_at(data, batch, derive_seed(ps, {1}));
            const CurvatureProbe probe{k, harness::unit_direction(net.layer(k).weights.rows(), net.layer(k).weights.cols(),
                                                                   derive_seed(ps, {2}))};
            const double approx = batch_quadform(net, b, kind, probe, b.size());
            const double exact = batch_fd_quadform(net, b, kind, probe, b.size());
            const QuadformReport rep = make_report(net, approx, exact);
            if (rep.degenerate()) continue;
            ++valid;
            for (std::size_t i = 0; i < thresholds.size(); ++i)
                if (*rep.rtol <= thresholds[i]) ++hits[i];
        }
        std::vector<std::string> row{num(k + 1)};
        for (auto h : hits) row.push_back(num(valid ? static_cast<double>(h) / static_cast<double>(valid) : 0.0));
        t.add(std::move(row));
    }
    return t;
}

struct ErrorScalingSamples {
    std::vector<double> scales;
    /// [scale][probe]
    std::vector<std::vector<double>> err;
    std::vector<std::vector<double>> lead;
};

/// Approximation gap |fd - approx| and leading term |approx| for the same
/// probes at every input scale c.
inline ErrorScalingSamples error_scaling_samples(const std::vector<LayerSpec>& spec, const InitScheme& scheme,
                                                 const LossKind& kind, const std::vector<double>& scales,
                                                 std::size_t probes, std::uint64_t seed) {
    ErrorScalingSamples s;
    s.scales = scales;
    s.err.assign(scales.size(), {});
    s.lead.assign(scales.size(), {});
    const std::size_t d_in = spec.front().d_in, d_out = spec.back().d_out;
    // Only layers with a curved activation at or after them have a nonzero
    // gap; elsewhere the approximation is exact and the FD residual is flat.
    std::vector<std::size_t> layers;
    for (std::size_t k = 0; k < spec.size(); ++k)
        for (std::size_t j = k; j < spec.size(); ++j)
            if (std::holds_alternative<act::Tanh>(spec[j].activation) || std::holds_alternative<act::Sigmoid>(spec[j].activation)) {
                layers.push_back(k);
                break;
            }
    if (layers.empty()) throw InvalidInput("error scaling needs a tanh or sigmoid layer");
    for (std::size_t p = 0; p < probes; ++p) {
        const std::uint64_t ps = derive_seed(seed, {0xe55u, p});
        const Network net = initialize(spec, scheme, derive_seed(ps, {0}));
        Rng rng(derive_seed(ps, {1}));
        Vector dir = normal_vector(static_cast<Eigen::Index>(d_in), 1.0, rng);
        dir /= dir.norm();
        Target t;
        if (std::holds_alternative<loss::SoftmaxCrossEntropy>(kind))
            t = std::uniform_int_distribution<std::size_t>(0, d_out - 1)(rng);
        else
            t = normal_vector(static_cast<Eigen::Index>(d_out), 1.0, rng);
        const std::size_t k = layers[p % layers.size()];
        const CurvatureProbe probe{k, harness::unit_direction(net.layer(k).weights.rows(), net.layer(k).weights.cols(),
                                                               derive_seed(ps, {2}))};
        for (std::size_t i = 0; i < scales.size(); ++i) {
            const Vector x = scales[i] * dir;
            const double approx = approx_quadform(net, forward(net, x), kind, t, probe);
            const double exact = fd_quadform(net, x, kind, t, probe);
            s.err[i].push_back(std::max(std::abs(exact - approx), 1e-300));
            s.lead[i].push_back(std::max(std::abs(approx), 1e-300));
        }
    }
    return s;
}

inline double log_mean(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += std::log(x);
    return acc / static_cast<double>(v.size());
}

/// Geometric means of the gap and the leading term per input scale, with the
/// fitted log-log slopes repeated on every row.
inline CsvTable run_error_scaling(const Config& c) {
    const auto spec = harness::spec_from(c, {8, 16, 16, 4}, "tanh", "tanh");
    const LossKind kind = harness::loss_from(c, spec.back().d_out);
    const auto scales = c.reals("scales", {0.2, 0.1, 0.05, 0.025});
    if (scales.size() < 2) throw ConfigError("scales needs at least two values");
    for (double s : scales)
        if (!(s > 0.0)) throw ConfigError("scales must be positive");
    const std::size_t probes = c.integer("probes", 200);
    if (probes == 0) throw ConfigError("probes must be positive");
    const auto s = error_scaling_samples(spec, harness::scheme_from(c), kind, scales, probes, c.integer("seed", 0));

    std::vector<double> err_gm, lead_gm;
    for (std::size_t i = 0; i < scales.size(); ++i) {
        err_gm.push_back(std::exp(log_mean(s.err[i])));
        lead_gm.push_back(std::exp(log_mean(s.lead[i])));
    }
    const double err_slope = loglog_slope(scales, err_gm);
    const double lead_slope = loglog_slope(scales, lead_gm);
    CsvTable t;
    t.header = {"scale", "err_geomean", "lead_geomean", "err_slope", "lead_slope"};
    for (std::size_t i = 0; i < scales.size(); ++i)
        t.add({num(scales[i]), num(err_gm[i]), num(lead_gm[i]), num(err_slope), num(lead_slope)});
    return t;
}

/// Per init std: top approximate Hessian eigenvalue of each requested layer at
/// initialization, then the mean per-batch loss over the last SGD epoch.
inline CsvTable run_init_sweep(const Config& c) {
    const auto spec = harness::spec_from(c, {784, 128, 64, 10}, "relu", "linear");
    const LossKind kind = harness::loss_from(c, spec.back().d_out);
    const Dataset data = harness::dataset_from(c, "mnist", spec.front().d_in, spec.back().d_out);
    harness::check_dataset(data, spec, kind);
    const auto stds = c.reals("stds", {1.0, 0.1, 0.005});
    const auto eigen_layers = c.integers("eigen_layers", {0, 1});
    for (auto l : eigen_layers)
        if (l >= spec.size()) throw ConfigError("eigen_layers entry out of range");
    const std::uint64_t seed = c.integer("seed", 0);
    TrainConfig tc;
    tc.learning_rate = c.real("lr", 0.01);
    tc.epochs = c.integer("epochs", 2);
    tc.batch_size = c.integer("batch_size", 32);
    tc.seed = derive_seed(seed, {0x7a1u});
    try {
        tc.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    const std::size_t eigen_samples = c.integer("eigen_samples", calibration_batch);

    CsvTable t;
    t.header = {"std"};
    for (auto l : eigen_layers) t.header.push_back("hessian_" + std::to_string(l + 1));
    t.header.push_back("final_loss");
    for (double sd : stds) {
        InitScheme s;
        try {
            s = InitScheme::fixed(sd);
        } catch (const InvalidInput& e) {
            throw ConfigError(e.what());
        }
        s.relu_correction = c.flag("relu_correct", false);
        s.dropout_correction = c.flag("dropout_correct", false);
        const Network net = initialize(spec, s, derive_seed(seed, {0x1u}));
        std::vector<std::string> row{num(sd)};
        for (auto l : eigen_layers)
            row.push_back(num(approx_top_eigenvalue(net, data, kind, l, eigen_samples, derive_seed(seed, {0x2u, l}))));
        const TrainResult tr = train_sgd(net, data, kind, tc);
        row.push_back(num(tr.final_average_loss(batches_per_epoch(data.size(), tc.batch_size))));
        t.add(std::move(row));
    }
    return t;
}

inline CsvTable run_correlation(const Config& c) {
    const auto spec = harness::spec_from(c, {1, 1, 1}, "linear", "linear");
    const LossKind kind = harness::loss_from(c, spec.back().d_out);
    Vector point;
    Target target;
    if (c.has("point")) {
        const auto p = c.reals("point", {});
        point = Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
        if (std::holds_alternative<loss::SoftmaxCrossEntropy>(kind)) {
            target = static_cast<std::size_t>(c.integer("point_target", 0));
        } else {
            const auto tv = c.reals("point_target", std::vector<double>(spec.back().d_out, 1.0));
            target = Vector(Eigen::Map<const Vector>(tv.data(), static_cast<Eigen::Index>(tv.size())));
        }
    } else {
        const Dataset data = harness::dataset_from(c, "mnist", spec.front().d_in, spec.back().d_out);
        harness::check_dataset(data, spec, kind);
        const std::size_t i = c.integer("point_index", 0);
        if (i >= data.size()) throw ConfigError("point_index out of range");
        point = data.input(i);
        target = data.target(i);
    }
    if (static_cast<std::size_t>(point.size()) != spec.front().d_in) throw ConfigError("point has the wrong dimension");

    CorrelationOptions opt;
    opt.loss = kind;
    opt.output_component = c.integer("output_component", 0);
    if (c.has("second_output_component")) opt.second_output_component = c.integer("second_output_component", 0);
    if (c.has("jacobian_layer")) opt.jacobian_layer = c.integer("jacobian_layer", 0);
    opt.jacobian_row = c.integer("jacobian_row", 0);
    opt.jacobian_col = c.integer("jacobian_col", 0);
    opt.weight_jacobian = c.flag("weight_jacobian", false);
    opt.n_perm = c.integer("permutations", 999);
    opt.seed = c.integer("seed", 0);
    const std::string stat = c.str("statistic", "squared");
    if (stat == "raw") opt.statistic = CorrelationStatistic::Raw;
    else if (stat == "squared") opt.statistic = CorrelationStatistic::Squared;
    else throw ConfigError("statistic must be raw or squared");

    std::vector<CorrelationReport> reports;
    try {
        reports = correlation_experiment(spec, harness::scheme_from(c), point, target, c.integer("seeds", 10),
                                         c.integer("inits", 10000), opt);
    } catch (const DegenerateInput&) {
        throw;
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    CsvTable t;
    t.header = {"seed_index", "pair", "r", "p_value", "n_samples", "n_permutations", "significant"};
    const std::size_t per_seed = opt.second_output_component ? 2 : 1;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        t.add({num(i / per_seed), r.pair, num(r.r), num(r.p_value), num(r.n_samples), num(r.n_permutations),
               r.significant() ? "1" : "0"});
    }
    return t;
}

struct CalibrationOutcome {
    Calibration calibration;
    double fd_eigenvalue = 0.0;
    Network net;
};

inline CalibrationOutcome calibrate_and_verify(const std::vector<LayerSpec>& spec, const InitScheme& scheme,
                                               const Dataset& data, const LossKind& kind, std::size_t layer,
                                               double target, double tol, std::size_t max_bisect, std::uint64_t seed) {
    CalibrationOutcome out;
    out.calibration = calibrate_to_unit_hessian(spec, scheme, data, kind, layer, target, tol, max_bisect, seed);
    out.net = initialize(spec, scheme, seed, out.calibration.scale);
    const FdHessian fd(out.net, data, kind, layer, std::min(calibration_batch, data.size()));
    out.fd_eigenvalue = top_algebraic_eigenvalue(fd, fd.rows(), fd.cols(), 300, 1e-6, derive_seed(seed, {0xfd0u})).eigenvalue;
    return out;
}

inline CsvTable calibration_table(const CalibrationOutcome& o) {
    CsvTable t;
    t.header = {"scale", "achieved_eigenvalue", "fd_eigenvalue", "evaluations"};
    t.add({num(o.calibration.scale), num(o.calibration.achieved_eigenvalue), num(o.fd_eigenvalue),
           num(o.calibration.evaluations)});
    return t;
}

inline CalibrationOutcome run_calibrate_outcome(const Config& c) {
    const auto spec = harness::spec_from(c, {16, 32, 32, 32, 4}, "tanh", "linear");
    const LossKind kind = harness::loss_from(c, spec.back().d_out);
    Config with_samples = c;
    if (!c.has("samples")) with_samples.set("samples", "64");
    const Dataset data = harness::dataset_from(with_samples, "blobs", spec.front().d_in, spec.back().d_out);
    harness::check_dataset(data, spec, kind);
    const std::size_t layer = c.integer("layer", 1);
    if (layer >= spec.size()) throw ConfigError("layer out of range");
    return calibrate_and_verify(spec, harness::scheme_from(c), data, kind, layer, c.real("target", 1.0), c.real("tol", 0.1),
                                c.integer("max_bisect", 60), c.integer("seed", 0));
}

inline CsvTable run_calibrate(const Config& c) { return calibration_table(run_calibrate_outcome(c)); }

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {"approx-error", "error-scaling", "init-sweep", "correlation", "calibrate"};
    return names;
}

inline CsvTable run_experiment(const std::string& name, const Config& c) {
    if (name == "approx-error") return run_approx_error(c);
    if (name == "error-scaling") return run_error_scaling(c);
    if (name == "init-sweep") return run_init_sweep(c);
    if (name == "correlation") return run_correlation(c);
    if (name == "calibrate") return run_calibrate(c);
    throw ConfigError("unknown experiment '" + name + "'");
}

}  // namespace curvinit
