#include "pvolab/approx.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "pvolab/error.hpp"
#include "pvolab/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "snapshot format is little-endian");

namespace pvolab {

using nlohmann::json;

// ---------------- Minibatch ----------------

void Minibatch::add(std::span<const double> input, std::span<const double> target) {
    if (count == 0 && input_dim == 0) {
        input_dim = static_cast<int>(input.size());
        output_dim = static_cast<int>(target.size());
    }
    if (static_cast<int>(input.size()) != input_dim ||
        static_cast<int>(target.size()) != output_dim)
        throw std::invalid_argument("minibatch row shape mismatch");
    inputs.insert(inputs.end(), input.begin(), input.end());
    targets.insert(targets.end(), target.begin(), target.end());
    ++count;
}

void Minibatch::add(const Observation& obs, std::span<const double> target) {
    add(obs.as_doubles(), target);
}

void Minibatch::clear() {
    count = 0;
    inputs.clear();
    targets.clear();
}

// ---------------- TabularFn ----------------

TabularFn::TabularFn(int output_dim, std::vector<double> default_value)
    : output_dim_(output_dim), default_(std::move(default_value)) {
    if (output_dim_ <= 0) throw std::invalid_argument("output_dim must be positive");
    if (default_.empty()) default_.assign(static_cast<std::size_t>(output_dim_), 0.0);
    if (static_cast<int>(default_.size()) != output_dim_)
        throw std::invalid_argument("default vector shape mismatch");
}

std::vector<double> TabularFn::forward(const Observation& obs) const {
    const auto it = table_.find(obs.packed_key());
    return it == table_.end() ? default_ : it->second.values;
}

std::vector<std::string> TabularFn::keys() const {
    std::vector<std::string> keys;
    keys.reserve(table_.size());
    for (const auto& [key, entry] : table_) {
        (void)entry;
        keys.push_back(key);
    }
    return keys;
}

void TabularFn::mean_update(const Observation& obs, std::span<const double> target) {
    if (static_cast<int>(target.size()) != output_dim_)
        throw std::invalid_argument("target shape mismatch");
    for (double t : target)
        if (!std::isfinite(t)) throw NumericError("non-finite tabular target");
    Entry& entry = table_[obs.packed_key()];
    if (entry.values.empty()) entry.values = default_;
    entry.count += 1;
    const double inv = 1.0 / static_cast<double>(entry.count);
    for (int i = 0; i < output_dim_; ++i)
        entry.values[i] += (target[i] - entry.values[i]) * inv;
}

void TabularFn::td_update(const Observation& obs, int output_index, double target,
                          double alpha) {
    if (output_index < 0 || output_index >= output_dim_)
        throw std::invalid_argument("output index out of range");
    if (!std::isfinite(target)) throw NumericError("non-finite tabular target");
    Entry& entry = table_[obs.packed_key()];
    if (entry.values.empty()) entry.values = default_;
    entry.values[output_index] += alpha * (target - entry.values[output_index]);
}

namespace {

std::string to_hex(const std::string& bytes) {
    static const char digits[] = "0123456789abcdef";
    std::string hex;
    hex.reserve(bytes.size() * 2);
    for (unsigned char b : bytes) {
        hex.push_back(digits[b >> 4]);
        hex.push_back(digits[b & 0xf]);
    }
    return hex;
}

std::string from_hex(const std::string& hex) {
    if (hex.size() % 2 != 0) throw ParseError("odd-length hex key");
    const auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        throw ParseError("bad hex digit");
    };
    std::string bytes;
    bytes.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2)
        bytes.push_back(static_cast<char>((nibble(hex[i]) << 4) | nibble(hex[i + 1])));
    return bytes;
}

} // namespace

void TabularFn::save(const std::filesystem::path& path) const {
    json entries = json::object();
    for (const auto& [key, entry] : table_)
        entries[to_hex(key)] = json{{"values", entry.values}, {"count", entry.count}};
    const json doc{{"schema_version", kSnapshotSchemaVersion},
                   {"output_dim", output_dim_},
                   {"default", default_},
                   {"entries", entries}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << doc.dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

TabularFn TabularFn::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    json doc;
    try {
        in >> doc;
        if (doc.at("schema_version").get<int>() != kSnapshotSchemaVersion)
            throw ParseError("unsupported tabular snapshot schema");
        TabularFn fn(doc.at("output_dim").get<int>(),
                     doc.at("default").get<std::vector<double>>());
        for (const auto& [hex, value] : doc.at("entries").items()) {
            Entry entry;
            entry.values = value.at("values").get<std::vector<double>>();
            entry.count = value.at("count").get<std::uint64_t>();
            if (static_cast<int>(entry.values.size()) != fn.output_dim_)
                throw ParseError("entry shape mismatch in tabular snapshot");
            fn.table_[from_hex(hex)] = std::move(entry);
        }
        return fn;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

// ---------------- MlpFn ----------------

MlpFn::MlpFn(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("need at least input and output layers");
    for (int s : sizes_)
        if (s <= 0) throw std::invalid_argument("layer sizes must be positive");

    std::size_t total = 0;
    for (std::size_t l = 1; l < sizes_.size(); ++l) {
        weight_offset_.push_back(total);
        total += static_cast<std::size_t>(sizes_[l]) * sizes_[l - 1];
        bias_offset_.push_back(total);
        total += static_cast<std::size_t>(sizes_[l]);
    }
    params_.assign(total, 0.0);
    adam_m_.assign(total, 0.0);
    adam_v_.assign(total, 0.0);
}

MlpFn::MlpFn(std::vector<int> layer_sizes, std::uint64_t init_seed)
    : MlpFn(std::move(layer_sizes)) {
    Rng rng(mix_seed(init_seed, 0x6d6c70));
    for (std::size_t l = 1; l < sizes_.size(); ++l) {
        const double limit = std::sqrt(6.0 / static_cast<double>(sizes_[l - 1]));
        double* w = params_.data() + weight_offset_[l - 1];
        const std::size_t n = static_cast<std::size_t>(sizes_[l]) * sizes_[l - 1];
        for (std::size_t i = 0; i < n; ++i) w[i] = rng.range(-limit, limit);
    }
}

MlpFn MlpFn::zeros(std::vector<int> layer_sizes) { return MlpFn(std::move(layer_sizes)); }

namespace {

void affine_forward(const double* w, const double* b, const double* x, int out_dim,
                    int in_dim, double* y) {
    for (int o = 0; o < out_dim; ++o) {
        const double* row = w + static_cast<std::size_t>(o) * in_dim;
        double acc = b[o];
        for (int i = 0; i < in_dim; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

} // namespace

std::vector<double> MlpFn::forward(std::span<const double> input) const {
    if (static_cast<int>(input.size()) != input_dim())
        throw std::invalid_argument("input dimension mismatch");

    std::vector<double> cur(input.begin(), input.end());
    std::vector<double> next;
    for (std::size_t l = 1; l < sizes_.size(); ++l) {
        next.assign(static_cast<std::size_t>(sizes_[l]), 0.0);
        affine_forward(params_.data() + weight_offset_[l - 1],
                       params_.data() + bias_offset_[l - 1], cur.data(), sizes_[l],
                       sizes_[l - 1], next.data());
        if (l + 1 < sizes_.size())
            for (double& v : next) v = v > 0.0 ? v : 0.0;
        cur.swap(next);
    }
    return cur;
}

std::vector<double> MlpFn::forward(const Observation& obs) const {
    return forward(obs.as_doubles());
}

double MlpFn::loss_only(const Minibatch& batch, std::vector<std::uint8_t>* gates) const {
    if (batch.count <= 0) throw ConfigError("empty batch");
    if (batch.input_dim != input_dim() || batch.output_dim != output_dim())
        throw std::invalid_argument("batch shape mismatch");
    if (gates) gates->clear();

    const std::size_t layers = sizes_.size() - 1;
    std::vector<double> cur;
    std::vector<double> next;
    double loss = 0.0;
    for (int s = 0; s < batch.count; ++s) {
        const double* x = batch.inputs.data() + static_cast<std::size_t>(s) * batch.input_dim;
        cur.assign(x, x + batch.input_dim);
        for (std::size_t l = 1; l <= layers; ++l) {
            next.assign(static_cast<std::size_t>(sizes_[l]), 0.0);
            affine_forward(params_.data() + weight_offset_[l - 1],
                           params_.data() + bias_offset_[l - 1], cur.data(), sizes_[l],
                           sizes_[l - 1], next.data());
            if (l < layers) {
                for (double& v : next) {
                    if (gates) gates->push_back(v > 0.0 ? 1 : 0);
                    v = v > 0.0 ? v : 0.0;
                }
            }
            cur.swap(next);
        }
        const double* y = batch.targets.data() + static_cast<std::size_t>(s) * batch.output_dim;
        for (int o = 0; o < batch.output_dim; ++o) {
            const double err = cur[o] - y[o];
            loss += err * err;
        }
    }
    return loss / batch.count;
}

double MlpFn::loss_and_grads(const Minibatch& batch, std::vector<double>& grads) const {
    if (batch.count <= 0) throw ConfigError("empty batch");
    if (batch.input_dim != input_dim() || batch.output_dim != output_dim())
        throw std::invalid_argument("batch shape mismatch");
    for (double t : batch.targets)
        if (!std::isfinite(t)) throw NumericError("non-finite regression target");

    grads.assign(params_.size(), 0.0);
    const std::size_t layers = sizes_.size() - 1;

    // activations[0] is the input row, activations[l] the post-rectifier
    // output of layer l (linear for the head)
    std::vector<std::vector<double>> acts(layers + 1);
    std::vector<double> delta;
    std::vector<double> delta_prev;

    double loss = 0.0;
    const double scale = 2.0 / batch.count;
    for (int s = 0; s < batch.count; ++s) {
        const double* x = batch.inputs.data() + static_cast<std::size_t>(s) * batch.input_dim;
        acts[0].assign(x, x + batch.input_dim);
        for (std::size_t l = 1; l <= layers; ++l) {
            acts[l].assign(static_cast<std::size_t>(sizes_[l]), 0.0);
            affine_forward(params_.data() + weight_offset_[l - 1],
                           params_.data() + bias_offset_[l - 1], acts[l - 1].data(),
                           sizes_[l], sizes_[l - 1], acts[l].data());
            if (l < layers)
                for (double& v : acts[l]) v = v > 0.0 ? v : 0.0;
        }

        const double* y = batch.targets.data() + static_cast<std::size_t>(s) * batch.output_dim;
        delta.assign(static_cast<std::size_t>(batch.output_dim), 0.0);
        for (int o = 0; o < batch.output_dim; ++o) {
            const double err = acts[layers][o] - y[o];
            loss += err * err;
            delta[o] = scale * err;
        }

        for (std::size_t l = layers; l >= 1; --l) {
            const int out_dim = sizes_[l];
            const int in_dim = sizes_[l - 1];
            double* gw = grads.data() + weight_offset_[l - 1];
            double* gb = grads.data() + bias_offset_[l - 1];
            const double* a_prev = acts[l - 1].data();
            for (int o = 0; o < out_dim; ++o) {
                const double d = delta[o];
                if (d != 0.0) {
                    double* grow = gw + static_cast<std::size_t>(o) * in_dim;
                    for (int i = 0; i < in_dim; ++i) grow[i] += d * a_prev[i];
                }
                gb[o] += d;
            }
            if (l > 1) {
                delta_prev.assign(static_cast<std::size_t>(in_dim), 0.0);
                const double* w = params_.data() + weight_offset_[l - 1];
                for (int o = 0; o < out_dim; ++o) {
                    const double d = delta[o];
                    if (d == 0.0) continue;
                    const double* row = w + static_cast<std::size_t>(o) * in_dim;
                    for (int i = 0; i < in_dim; ++i) delta_prev[i] += d * row[i];
                }
                // rectifier gate: gradient passes only where the unit fired
                for (int i = 0; i < in_dim; ++i)
                    if (a_prev[i] <= 0.0) delta_prev[i] = 0.0;
                delta.swap(delta_prev);
            }
        }
    }
    return loss / batch.count;
}

double MlpFn::grad_step(const Minibatch& batch, double alpha) {
    static thread_local std::vector<double> grads;
    const double loss = loss_and_grads(batch, grads);

    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    ++adam_t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const double g = grads[i];
        adam_m_[i] = beta1 * adam_m_[i] + (1.0 - beta1) * g;
        adam_v_[i] = beta2 * adam_v_[i] + (1.0 - beta2) * g * g;
        const double mhat = adam_m_[i] / bc1;
        const double vhat = adam_v_[i] / bc2;
        params_[i] -= alpha * mhat / (std::sqrt(vhat) + eps);
    }
    return loss;
}

void MlpFn::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const json header{{"schema_version", kSnapshotSchemaVersion}, {"layer_sizes", sizes_}};
    out << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(params_.data()),
              static_cast<std::streamsize>(params_.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

MlpFn MlpFn::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string header_line;
    if (!std::getline(in, header_line)) throw ParseError(path.string() + ": missing header");
    try {
        const json header = json::parse(header_line);
        if (header.at("schema_version").get<int>() != kSnapshotSchemaVersion)
            throw ParseError("unsupported mlp snapshot schema");
        MlpFn fn(header.at("layer_sizes").get<std::vector<int>>());
        in.read(reinterpret_cast<char*>(fn.params_.data()),
                static_cast<std::streamsize>(fn.params_.size() * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(fn.params_.size() * sizeof(double)))
            throw ParseError(path.string() + ": truncated parameter block");
        return fn;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

// ---------------- gradient check ----------------

double finite_diff_check(const MlpFn& fn, const Observation& obs,
                         std::span<const double> target, double eps,
                         std::uint64_t seed) {
    if (eps < 1e-6 || eps > 1e-3)
        throw ConfigError("finite-difference eps outside [1e-6, 1e-3]");

    MlpFn probe = fn;
    Minibatch batch;
    batch.add(obs, target);

    std::vector<double> analytic;
    probe.loss_and_grads(batch, analytic);

    const std::size_t total = probe.param_count();
    const auto sample_size =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.05 * total)));
    std::vector<std::size_t> indices(total);
    for (std::size_t i = 0; i < total; ++i) indices[i] = i;
    Rng rng(mix_seed(seed, 0xfd));
    for (std::size_t i = 0; i < sample_size; ++i) {
        const std::size_t j = i + rng.below(total - i);
        std::swap(indices[i], indices[j]);
    }

    // both sides tiny means the component vanishes; don't amplify noise
    constexpr double vanish = 1e-6;
    auto params = probe.params_mutable();
    std::vector<std::uint8_t> gates_plus;
    std::vector<std::uint8_t> gates_minus;
    double worst = 0.0;
    for (std::size_t i = 0; i < sample_size; ++i) {
        const std::size_t p = indices[i];
        const double saved = params[p];
        params[p] = saved + eps;
        const double lp = probe.loss_only(batch, &gates_plus);
        params[p] = saved - eps;
        const double lm = probe.loss_only(batch, &gates_minus);
        params[p] = saved;
        if (gates_plus != gates_minus) continue; // crossed a kink
        const double numeric = (lp - lm) / (2.0 * eps);
        const double a = std::abs(analytic[p]);
        const double n = std::abs(numeric);
        if (a < vanish && n < vanish) continue;
        worst = std::max(worst, std::abs(analytic[p] - numeric) / std::max(a, n));
    }
    return worst;
}

} // namespace pvolab
