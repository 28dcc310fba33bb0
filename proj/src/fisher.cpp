#include "fishmerge/fisher.hpp"

#include "fishmerge/rng.hpp"
#include "fishmerge/sum.hpp"
#include "fishmerge/threads.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <numeric>
#include <thread>

namespace fishmerge {

namespace {

constexpr int kMaxExactClasses = 1024;
constexpr std::int64_t kChunk = 256;

std::vector<std::int64_t> choose_examples(const LabeledDataset& data, const FisherConfig& config) {
    if (data.n() == 0) throw DataError("fisher: empty dataset");
    if (config.n_examples < 1) throw DataError("fisher: n_examples must be >= 1");
    std::vector<std::int64_t> idx(static_cast<std::size_t>(data.n()));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(config.seed);
    rng.shuffle(idx);
    const auto n = std::min<std::int64_t>(config.n_examples, data.n());
    idx.resize(static_cast<std::size_t>(n));
    return idx;
}

// Elementwise Kahan accumulation of congruent tensor maps.
struct MapAccumulator {
    NamedTensors sum;
    NamedTensors comp;

    explicit MapAccumulator(const NamedTensors& like) {
        for (const auto& [name, t] : like) {
            sum.emplace(name, Tensor(t.shape, Array::Zero(t.data.size())));
            comp.emplace(name, Tensor(t.shape, Array::Zero(t.data.size())));
        }
    }

    void add(const NamedTensors& term) {
        auto is = sum.begin();
        auto ic = comp.begin();
        auto it = term.begin();
        for (; is != sum.end(); ++is, ++ic, ++it) {
            Array& s = is->second.data;
            Array& c = ic->second.data;
            const Array& x = it->second.data;
            for (std::int64_t k = 0; k < s.size(); ++k) {
                const double y = x[k] - c[k];
                const double t2 = s[k] + y;
                c[k] = (t2 - s[k]) - y;
                s[k] = t2;
            }
        }
    }
};

void zero_all(NamedTensors& m) {
    for (auto& [name, t] : m) t.data.setZero();
}

// Contribution of one example to the (unnormalized) Fisher sum:
// exact mode enumerates classes, sampled mode draws k labels from the
// model's own predictive distribution.
void example_fisher_term(const ModelSpec& spec, const ParameterSet& params, Workspace& ws,
                         const Eigen::Ref<const Vector>& x, bool sampled, std::int64_t k,
                         Rng* rng, NamedTensors& out) {
    forward_trace(spec, params, x, ws);
    Array probs(ws.log_probs.size());
    for (std::int64_t c = 0; c < ws.log_probs.size(); ++c)
        probs[c] = std::exp(ws.log_probs[c]);  // exact underflow to zero
    if (!sampled) {
        for (int y = 0; y < spec.num_classes; ++y) {
            if (probs[y] == 0.0) continue;
            log_prob_backward(spec, params, ws, y, probs[y], true, out);
        }
        return;
    }
    std::vector<std::int64_t> counts(static_cast<std::size_t>(spec.num_classes), 0);
    for (std::int64_t s = 0; s < k; ++s) {
        const double u = rng->uniform01();
        double cum = 0.0;
        int y = spec.num_classes - 1;
        for (int c = 0; c < spec.num_classes; ++c) {
            cum += probs[c];
            if (u < cum) {
                y = c;
                break;
            }
        }
        ++counts[static_cast<std::size_t>(y)];
    }
    for (int y = 0; y < spec.num_classes; ++y) {
        if (counts[static_cast<std::size_t>(y)] == 0) continue;
        const double w = static_cast<double>(counts[static_cast<std::size_t>(y)]) /
                         static_cast<double>(k);
        log_prob_backward(spec, params, ws, y, w, true, out);
    }
}

FisherDiagonal estimate_fisher(const ModelSpec& spec, const ParameterSet& params,
                               const LabeledDataset& data, const FisherConfig& config,
                               bool sampled) {
    require_matching_shapes(spec, params);
    if (data.dim() != spec.input_dim) throw DataError("fisher: dataset/input_dim mismatch");
    if (!sampled && spec.num_classes > kMaxExactClasses)
        throw DataError("fisher: too many classes for exact enumeration; use sampling");
    if (sampled && config.k < 1) throw DataError("fisher: k must be >= 1");

    const auto chosen = choose_examples(data, config);
    const std::int64_t n = static_cast<std::int64_t>(chosen.size());
    const std::int64_t n_chunks = (n + kChunk - 1) / kChunk;

    // Fixed-size chunks with in-order combination: the reduction is
    // bit-identical for any worker count.
    std::vector<NamedTensors> partials(static_cast<std::size_t>(n_chunks));
    auto run_chunk = [&](std::int64_t chunk) {
        MapAccumulator acc(params.entries);
        NamedTensors term = zero_params_like(spec);
        Workspace ws;
        const std::int64_t lo = chunk * kChunk;
        const std::int64_t hi = std::min(n, lo + kChunk);
        for (std::int64_t pos = lo; pos < hi; ++pos) {
            zero_all(term);
            Rng example_rng = Rng(config.seed).child(static_cast<std::uint64_t>(pos));
            example_fisher_term(spec, params, ws, data.features.row(chosen[pos]).transpose(),
                                sampled, config.k, &example_rng, term);
            acc.add(term);
        }
        partials[static_cast<std::size_t>(chunk)] = std::move(acc.sum);
    };

    const int workers = std::min<int>(configured_threads(), static_cast<int>(n_chunks));
    if (workers <= 1) {
        for (std::int64_t chunk = 0; chunk < n_chunks; ++chunk) run_chunk(chunk);
    } else {
        std::atomic<std::int64_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::int64_t chunk = next.fetch_add(1); chunk < n_chunks;
                     chunk = next.fetch_add(1))
                    run_chunk(chunk);
            });
        }
        for (auto& t : pool) t.join();
    }

    MapAccumulator total(params.entries);
    for (const auto& partial : partials) total.add(partial);

    FisherDiagonal fisher;
    fisher.entries = std::move(total.sum);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& [name, t] : fisher.entries) t.data *= inv_n;
    fisher.n_examples_used = n;
    fisher.mode = sampled ? FisherMode::Sampled : FisherMode::Exact;
    fisher.k = sampled ? config.k : 0;
    fisher.lineage_id = params.lineage_id;
    validate(fisher);
    return fisher;
}

}  // namespace

void validate(const FisherDiagonal& fisher) {
    if (fisher.entries.empty()) throw DataError("fisher: empty entry map");
    if (fisher.n_examples_used < 1) throw DataError("fisher: n_examples_used must be >= 1");
    for (const auto& [name, t] : fisher.entries) {
        if (!t.data.isFinite().all())
            throw NumericalError("fisher tensor \"" + name + "\": non-finite entry");
        if ((t.data < 0.0).any())
            throw NumericalError("fisher tensor \"" + name + "\": negative entry");
    }
}

FisherDiagonal estimate_fisher_exact(const ModelSpec& spec, const ParameterSet& params,
                                     const LabeledDataset& data, const FisherConfig& config) {
    return estimate_fisher(spec, params, data, config, false);
}

FisherDiagonal estimate_fisher_sampled(const ModelSpec& spec, const ParameterSet& params,
                                       const LabeledDataset& data, const FisherConfig& config) {
    return estimate_fisher(spec, params, data, config, true);
}

double expected_kl_under_perturbation(const ModelSpec& spec, const ParameterSet& params,
                                      const NamedTensors& delta, const LabeledDataset& data) {
    require_matching_shapes(spec, params);
    require_congruent(params.entries, delta, "expected_kl: delta");
    if (data.n() == 0) throw DataError("expected_kl: empty dataset");

    ParameterSet shifted = params;
    {
        auto ip = shifted.entries.begin();
        auto id = delta.begin();
        for (; ip != shifted.entries.end(); ++ip, ++id) ip->second.data += id->second.data;
    }

    Workspace ws_p;
    Workspace ws_q;
    KahanSum total;
    for (std::int64_t i = 0; i < data.n(); ++i) {
        const auto x = data.features.row(i).transpose();
        forward_trace(spec, params, x, ws_p);
        forward_trace(spec, shifted, x, ws_q);
        double kl = 0.0;
        for (int c = 0; c < spec.num_classes; ++c) {
            const double p = std::exp(ws_p.log_probs[c]);
            if (p == 0.0) continue;  // 0 * log(0/q) = 0
            kl += p * (ws_p.log_probs[c] - ws_q.log_probs[c]);
        }
        total.add(kl);
    }
    return total.value() / static_cast<double>(data.n());
}

void save_fisher(const FisherDiagonal& fisher, const RoleTags& role_tags,
                 const std::filesystem::path& path) {
    validate(fisher);
    FileContents c;
    c.params.entries = fisher.entries;
    c.params.lineage_id = fisher.lineage_id;
    c.tags = role_tags;
    c.fisher = true;
    c.fisher_meta.n_examples_used = fisher.n_examples_used;
    c.fisher_meta.mode = fisher.mode == FisherMode::Exact ? "exact" : "sampled";
    c.fisher_meta.k = fisher.k;
    save_file(c, path);
}

FisherDiagonal load_fisher(const std::filesystem::path& path) {
    FileContents c = load_file(path);
    if (!c.fisher)
        throw DataError("expected a Fisher diagonal but " + path.string() + " is a checkpoint");
    FisherDiagonal fisher;
    fisher.entries = std::move(c.params.entries);
    fisher.lineage_id = std::move(c.params.lineage_id);
    fisher.n_examples_used = c.fisher_meta.n_examples_used;
    fisher.mode = c.fisher_meta.mode == "exact" ? FisherMode::Exact : FisherMode::Sampled;
    fisher.k = c.fisher_meta.k;
    validate(fisher);
    return fisher;
}

}  // namespace fishmerge
