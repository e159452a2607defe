#pragma once

#include "reprobe/errors.hpp"
#include "reprobe/tokens.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <thread>
#include <unordered_map>
#include <vector>

namespace reprobe {

// Anything that can assign next-token probabilities. score() is teacher-forced:
// position p is scored as P(ctx[p] | ctx[<p]). Implementations must be safe for
// concurrent calls.
class ModelAdapter {
public:
    virtual ~ModelAdapter() = default;

    virtual const VocabPtr& vocab() const = 0;

    // Full next-token distribution over the vocab; sums to 1 within 1e-6.
    virtual std::vector<double> next_dist(const TokenSeq& context) const = 0;

    virtual std::map<std::size_t, double> score(const TokenSeq& context,
                                                std::span<const std::size_t> positions) const {
        std::map<std::size_t, double> out;
        for (std::size_t p : positions) {
            if (p >= context.size()) {
                throw std::invalid_argument("score: position " + std::to_string(p) + " out of range");
            }
            std::vector<TokenId> prefix(context.ids().begin(),
                                        context.ids().begin() + static_cast<std::ptrdiff_t>(p));
            const auto dist = next_dist(TokenSeq(context.vocab(), std::move(prefix)));
            out.emplace(p, dist[context[p]]);
        }
        return out;
    }

    // Upper bound on useful concurrent score() calls; callers fan out up to this.
    virtual unsigned max_parallel_scores() const {
        return std::max(1u, std::thread::hardware_concurrency());
    }
};

// Closed-form reference model exhibiting token co-occurrence reinforcement by
// construction. Three components over the non-special vocab, mixed per context:
//
//   P_bg(w)   = (count(w) + alpha) / (L_ns + alpha * |V_ns|)        smoothed unigram
//   P_rec(w)  = count(w)^2 / sum_u count(u)^2                       recurrence (squared counts)
//   P_copy(w) = M(w) / S, M(w) = #{j < L-1 : ctx[j] = last, ctx[j+1] = w}, S = sum_w M(w)
//   lambda    = S / (S + kappa)
//   P(w)      = (1 - lambda) * ((1 - mu) * P_bg + mu * P_rec) + lambda * P_copy
//
// Counts ignore special tokens. Empty (or all-special) context falls back to
// the uniform distribution over non-specials; P_copy falls back to P_bg when
// the last token has never been continued (S = 0). lambda = S/(S+kappa) grows
// with every observed continuation of the current last token, which is what
// makes adjacent-pair probes strictly monotone in the number of repetitions.
class CopyAugmentedModel final : public ModelAdapter {
public:
    explicit CopyAugmentedModel(VocabPtr vocab, double alpha = 0.1, double kappa = 2.0, double mu = 0.5)
        : vocab_(std::move(vocab)), alpha_(alpha), kappa_(kappa), mu_(mu) {
        if (!vocab_) throw std::invalid_argument("CopyAugmentedModel: null vocab");
        if (alpha_ <= 0.0) throw std::invalid_argument("CopyAugmentedModel: alpha must be > 0");
        if (kappa_ <= 0.0) throw std::invalid_argument("CopyAugmentedModel: kappa must be > 0");
        if (mu_ < 0.0 || mu_ > 1.0) throw std::invalid_argument("CopyAugmentedModel: mu must be in [0,1]");
        if (vocab_->non_special_count() == 0) {
            throw std::invalid_argument("CopyAugmentedModel: vocab has no non-special tokens");
        }
    }

    const VocabPtr& vocab() const override { return vocab_; }
    double alpha() const noexcept { return alpha_; }
    double kappa() const noexcept { return kappa_; }
    double mu() const noexcept { return mu_; }

    // P(target | context), O(|context|) time.
    double token_prob(std::span<const TokenId> context, TokenId target) const {
        if (target >= vocab_->size()) {
            throw std::invalid_argument("token_prob: target out of range");
        }
        if (vocab_->is_special(target)) {
            return 0.0;
        }
        const double uniform = 1.0 / static_cast<double>(vocab_->non_special_count());

        std::size_t len_ns = 0;
        std::uint64_t target_count = 0;
        double sq_sum = 0.0;
        std::unordered_map<TokenId, std::uint64_t> counts;
        counts.reserve(context.size());
        for (TokenId id : context) {
            if (vocab_->is_special(id)) continue;
            ++len_ns;
            ++counts[id];
        }
        if (len_ns == 0) {
            return uniform;
        }
        for (const auto& [id, c] : counts) {
            sq_sum += static_cast<double>(c) * static_cast<double>(c);
        }
        if (auto it = counts.find(target); it != counts.end()) {
            target_count = it->second;
        }

        const double bg = (static_cast<double>(target_count) + alpha_) /
                          (static_cast<double>(len_ns) + alpha_ * static_cast<double>(vocab_->non_special_count()));
        const double rec = static_cast<double>(target_count) * static_cast<double>(target_count) / sq_sum;

        const TokenId last = context[context.size() - 1];
        std::uint64_t m_target = 0, s_total = 0;
        for (std::size_t j = 0; j + 1 < context.size(); ++j) {
            if (context[j] == last) {
                ++s_total;
                if (context[j + 1] == target) ++m_target;
            }
        }
        const double lambda = static_cast<double>(s_total) / (static_cast<double>(s_total) + kappa_);
        const double copy = s_total > 0 ? static_cast<double>(m_target) / static_cast<double>(s_total) : bg;

        return (1.0 - lambda) * ((1.0 - mu_) * bg + mu_ * rec) + lambda * copy;
    }

    std::vector<double> next_dist(const TokenSeq& context) const override {
        if (!same_vocab(context.vocab(), vocab_)) {
            throw std::invalid_argument("next_dist: context vocab mismatch");
        }
        std::vector<double> dist(vocab_->size(), 0.0);
        const auto& ns = vocab_->non_special_ids();
        const double uniform = 1.0 / static_cast<double>(ns.size());

        std::size_t len_ns = 0;
        std::unordered_map<TokenId, std::uint64_t> counts;
        counts.reserve(context.size());
        for (TokenId id : context.ids()) {
            if (vocab_->is_special(id)) continue;
            ++len_ns;
            ++counts[id];
        }
        if (len_ns == 0) {
            for (TokenId id : ns) dist[id] = uniform;
            return dist;
        }
        double sq_sum = 0.0;
        for (const auto& [id, c] : counts) {
            sq_sum += static_cast<double>(c) * static_cast<double>(c);
        }

        const TokenId last = context[context.size() - 1];
        std::unordered_map<TokenId, std::uint64_t> m;
        std::uint64_t s_total = 0;
        for (std::size_t j = 0; j + 1 < context.size(); ++j) {
            if (context[j] == last) {
                ++s_total;
                ++m[context[j + 1]];
            }
        }
        const double lambda = static_cast<double>(s_total) / (static_cast<double>(s_total) + kappa_);
        const double bg_denom =
            static_cast<double>(len_ns) + alpha_ * static_cast<double>(ns.size());

        for (TokenId id : ns) {
            std::uint64_t c = 0;
            if (auto it = counts.find(id); it != counts.end()) c = it->second;
            const double bg = (static_cast<double>(c) + alpha_) / bg_denom;
            const double rec = static_cast<double>(c) * static_cast<double>(c) / sq_sum;
            double copy = bg;
            if (s_total > 0) {
                std::uint64_t mc = 0;
                if (auto it = m.find(id); it != m.end()) mc = it->second;
                copy = static_cast<double>(mc) / static_cast<double>(s_total);
            }
            dist[id] = (1.0 - lambda) * ((1.0 - mu_) * bg + mu_ * rec) + lambda * copy;
        }
        return dist;
    }

    std::map<std::size_t, double> score(const TokenSeq& context,
                                        std::span<const std::size_t> positions) const override {
        std::map<std::size_t, double> out;
        const auto& ids = context.ids();
        for (std::size_t p : positions) {
            if (p >= ids.size()) {
                throw std::invalid_argument("score: position " + std::to_string(p) + " out of range");
            }
            out.emplace(p, token_prob(std::span<const TokenId>(ids.data(), p), ids[p]));
        }
        return out;
    }

private:
    VocabPtr vocab_;
    double alpha_, kappa_, mu_;
};

inline std::map<std::size_t, double> score(const ModelAdapter& adapter, const TokenSeq& context,
                                           std::span<const std::size_t> positions) {
    return adapter.score(context, positions);
}

inline std::vector<double> copy_model_next_dist(const CopyAugmentedModel& model, const TokenSeq& context) {
    return model.next_dist(context);
}

} // namespace reprobe
