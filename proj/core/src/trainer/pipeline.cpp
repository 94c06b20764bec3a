#include "pamt/trainer/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <tuple>
#include <cmath>

#include "pamt/eval/metrics.hpp"
#include "pamt/numerics/errors.hpp"
#include "pamt/numerics/rng.hpp"
#include "pamt/numerics/tape.hpp"

namespace pamt {

namespace {

constexpr std::uint64_t kScorerStream = 0x72707331;
constexpr std::uint64_t kKMeansStream = 0x6b6d6e73;
constexpr std::uint64_t kHeadStream = 0x68656164;
constexpr std::uint64_t kAdapterStream = 0x61647074;
constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kFractionStream = 0x66726163;

// Rows `indices` of an (M x D) matrix.
Tensor gather_rows(const Tensor& f, std::span<const std::size_t> indices) {
    const std::size_t d = f.dim(1);
    std::vector<double> out;
    out.reserve(indices.size() * d);
    for (auto j : indices) {
        auto row = f.data().subspan(j * d, d);
        out.insert(out.end(), row.begin(), row.end());
    }
    return Tensor({indices.size(), d}, std::move(out));
}

// (-mean, 1/std) per column over the rows of matrices[positions].
std::pair<Tensor, Tensor> fit_standardiser(const std::vector<Tensor>& matrices, std::span<const std::size_t> positions) {
    const std::size_t d = matrices.at(positions.front()).dim(1);
    std::vector<double> mean(d, 0.0), sq(d, 0.0);
    double n = 0.0;
    for (auto p : positions) {
        const Tensor& f = matrices[p];
        for (std::size_t r = 0; r < f.dim(0); ++r) {
            for (std::size_t k = 0; k < d; ++k) mean[k] += f.at(r, k);
            n += 1.0;
        }
    }
    for (double& m : mean) m /= n;
    for (auto p : positions) {
        const Tensor& f = matrices[p];
        for (std::size_t r = 0; r < f.dim(0); ++r)
            for (std::size_t k = 0; k < d; ++k) sq[k] += (f.at(r, k) - mean[k]) * (f.at(r, k) - mean[k]);
    }
    Tensor shift({d}), scale({d});
    for (std::size_t k = 0; k < d; ++k) {
        shift[k] = -mean[k];
        scale[k] = 1.0 / std::max(std::sqrt(sq[k] / n), 1e-6);
    }
    return {shift, scale};
}

Tensor apply_standardiser(Tensor f, const Tensor& shift, const Tensor& scale) {
    for (std::size_t r = 0; r < f.dim(0); ++r)
        for (std::size_t k = 0; k < f.dim(1); ++k) f.at(r, k) = (f.at(r, k) + shift[k]) * scale[k];
    return f;
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }
bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

constexpr std::pair<TuningStrategy, std::string_view> kStrategyNames[] = {
    {TuningStrategy::frozen_baseline, "frozen_baseline"},
    {TuningStrategy::pamt, "pamt"},
    {TuningStrategy::fully_tuning, "fully_tuning"},
    {TuningStrategy::partial_last_layer, "partial_last_layer"},
    {TuningStrategy::bias_only, "bias_only"},
};

}  // namespace

std::string_view to_string(TuningStrategy strategy) {
    for (const auto& [s, name] : kStrategyNames)
        if (s == strategy) return name;
    return "unknown";
}

TuningStrategy parse_tuning_strategy(std::string_view name) {
    for (const auto& [s, n] : kStrategyNames)
        if (n == name) return s;
    std::string valid;
    for (const auto& [s, n] : kStrategyNames) valid += (valid.empty() ? "" : ", ") + std::string(n);
    throw InvalidArgument("unknown strategy '" + std::string(name) + "' (valid: " + valid + ")");
}

std::vector<TuningStrategy> all_strategies() {
    std::vector<TuningStrategy> out;
    for (const auto& [s, n] : kStrategyNames) out.push_back(s);
    return out;
}

std::string ComponentToggles::label() const {
    std::string out;
    auto add = [&out](bool on, const char* name) {
        if (on) out += (out.empty() ? "" : "+") + std::string(name);
    };
    add(rps, "RPS");
    add(pvp, "PVP");
    add(amt, "AMT");
    return out.empty() ? "baseline" : out;
}

void TrainConfig::validate() const {
    backbone.validate();
    if (epochs == 0) throw InvalidArgument("epochs must be positive");
    if (!(adam.lr > 0) || !(adam.weight_decay >= 0) || !(prompt_lr0 > 0) || !(scorer_lr > 0))
        throw InvalidArgument("learning rates must be positive and weight decay non-negative");
    if (topk == 0) throw InvalidArgument("topk must be positive");
    if (clusters == 0) throw InvalidArgument("clusters must be positive");
    if (attention_dim == 0) throw InvalidArgument("attention_dim must be positive");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw InvalidArgument("train_fraction must lie in (0, 1]");
    if (components.rps && scorer_epochs == 0) throw InvalidArgument("scorer_epochs must be positive");
}

std::size_t count_trainable(const ParamRegistry& registry, const std::optional<PromptBank>& bank) {
    std::size_t n = 0;
    for (const auto& p : registry) {
        if (!p.trainable) continue;
        n += (bank && starts_with(p.name, "pvp.prompt.")) ? bank->border_entries() : p.value.size();
    }
    return n;
}

Pipeline::Pipeline(std::span<const WsiBag> bags, TrainConfig config, Stage1Cache* cache)
    : bags_(bags), config_(std::move(config)), cache_(cache ? cache : &own_cache_) {
    if (bags_.empty()) throw InvalidArgument("pipeline: empty dataset");
    const auto& shape = bags_.front().patches.at(0).shape();
    if (shape.size() != 3) throw ShapeError("pipeline", Shape{3, 0, 0}, shape);
    config_.backbone.input_channels = shape[0];
    config_.backbone.input_size = shape[1];
    config_.validate();
}

void Pipeline::prepare() {
    if (prepared_) return;
    split_ = split_dataset(bags_, config_.ratios, config_.split_seed);
    train_ = subsample_stratified(bags_, split_.train, config_.train_fraction, mix_seed(config_.seed, kFractionStream));
    backbone_ = Backbone::init(config_.backbone, config_.backbone_seed, registry_);
    stage1();
    RunResult scratch;
    stage2(scratch);
    stage3();
    build_model();
    cache_prefixes();
    fit_feature_standardiser();
    prepared_ = true;
}

void Pipeline::stage1() {
    const std::string key = dataset_checksum(bags_) + ":" + backbone_.conv_checksum(registry_);
    if (cache_->key != key) {
        cache_->features.clear();
        cache_->features.reserve(bags_.size());
        for (const auto& bag : bags_) cache_->features.push_back(extract_features(bag.patches, backbone_, registry_));
        cache_->key = key;
    }
    const auto [shift, scale] = fit_standardiser(cache_->features, train_);
    features_.clear();
    for (const Tensor& f : cache_->features) features_.push_back(apply_standardiser(f, shift, scale));
}

void Pipeline::fit_feature_standardiser() {
    std::vector<Tensor> rows(bags_.size());
    for (auto p : train_) {
        Tape tape(false);
        std::vector<Tensor> values;
        for (Var v : raw_bag_features(tape, p)) values.push_back(tape.value(v));
        rows[p] = stack_rows(values);
    }
    std::tie(feature_shift_, feature_scale_) = fit_standardiser(rows, train_);
}

Var Pipeline::standardise(Tape& tape, Var raw) {
    return tape.mul(tape.add(raw, tape.constant(feature_shift_)), tape.constant(feature_scale_));
}

void Pipeline::stage2(RunResult&) {
    sampled_.clear();
    sampled_.reserve(bags_.size());
    if (!config_.components.rps) {
        for (const auto& bag : bags_) {
            SampledBag s;
            s.bag_id = bag.bag_id;
            s.label = bag.label;
            for (std::size_t j = 0; j < bag.size(); ++j) s.selected_indices.push_back(j);
            s.scores.assign(bag.size(), 1.0 / static_cast<double>(bag.size()));
            sampled_.push_back(std::move(s));
        }
        return;
    }
    std::vector<Tensor> train_features;
    std::vector<int> labels;
    for (auto p : train_) {
        train_features.push_back(features_[p]);
        labels.push_back(bags_[p].label);
    }
    ScorerConfig sc;
    sc.epochs = config_.scorer_epochs;
    sc.adam = config_.adam;
    sc.adam.lr = config_.scorer_lr;
    sc.attention_dim = config_.attention_dim;
    sc.seed = mix_seed(config_.seed, kScorerStream);
    Scorer scorer = pretrain_scorer(train_features, labels, sc);
    scorer_checksum_ = scorer.checksum();
    scorer_trace_ = scorer.loss_trace;
    for (std::size_t p = 0; p < bags_.size(); ++p) {
        const auto scores = scorer.score(features_[p]);
        sampled_.push_back(sample_bag(bags_[p].bag_id, bags_[p].label, scores, config_.topk));
    }
}

void Pipeline::stage3() {
    centroids_.reset();
    assignment_.clear();
    if (!config_.uses_prompts()) return;
    std::vector<Tensor> rows;
    for (auto p : train_) {
        const Tensor sel = gather_rows(features_[p], sampled_[p].selected_indices);
        for (std::size_t k = 0; k < sel.dim(0); ++k) rows.push_back(sel.row(k));
    }
    const Tensor stacked = stack_rows(rows);
    auto fit = kmeans_fit(stacked, config_.clusters, mix_seed(config_.seed, kKMeansStream), config_.kmeans_max_iters,
                          config_.kmeans_tol);
    centroids_ = std::move(fit.centroids);
    for (std::size_t p = 0; p < bags_.size(); ++p)
        assign_bag(assignment_, sampled_[p], gather_rows(features_[p], sampled_[p].selected_indices), *centroids_);
}

bool Pipeline::param_trainable(const std::string& name) const {
    if (starts_with(name, "mil.")) return true;
    switch (config_.strategy) {
        case TuningStrategy::frozen_baseline:
            return false;
        case TuningStrategy::pamt:
            return starts_with(name, "adapter.") || starts_with(name, "pvp.prompt.");
        case TuningStrategy::fully_tuning:
            return starts_with(name, "backbone.");
        case TuningStrategy::partial_last_layer:
            return starts_with(name, "backbone.block" + std::to_string(config_.backbone.block_count() - 1) + ".");
        case TuningStrategy::bias_only:
            return starts_with(name, "backbone.") && ends_with(name, ".bias");
    }
    return false;
}

void Pipeline::build_model() {
    Rng head_rng(mix_seed(config_.seed, kHeadStream));
    head_ = make_mil_head(registry_, "mil", config_.head, config_.backbone.feature_dim(), config_.attention_dim,
                          head_rng);
    if (config_.uses_adapters()) backbone_.attach_adapters(registry_, mix_seed(config_.seed, kAdapterStream));
    if (config_.uses_prompts()) {
        const auto& shape = bags_.front().patches.front().shape();
        bank_ = make_prompt_bank(registry_, config_.clusters, config_.pad_size, shape[0], shape[1], shape[2]);
    }
    registry_.set_trainable_where([this](const Parameter& p) { return param_trainable(p.name); });
}

void Pipeline::cache_prefixes() {
    const std::size_t n_blocks = backbone_.blocks().size();
    prefix_depth_ = n_blocks;
    if (config_.uses_prompts()) {
        prefix_depth_ = 0;
    } else {
        for (std::size_t i = 0; i < n_blocks; ++i) {
            const auto& b = backbone_.blocks()[i];
            const bool adapted = config_.uses_adapters() && backbone_.adapter_for(i) != nullptr;
            if (adapted || registry_.at(b.weight).trainable || registry_.at(b.bias).trainable) {
                prefix_depth_ = i;
                break;
            }
        }
    }
    prefix_.assign(bags_.size(), {});
    if (prefix_depth_ == 0 || prefix_depth_ == n_blocks) return;
    for (std::size_t p = 0; p < bags_.size(); ++p) {
        for (auto j : sampled_[p].selected_indices)
            prefix_[p].push_back(extract_prefix(bags_[p].patches[j], backbone_, registry_, prefix_depth_));
    }
}

std::vector<Var> Pipeline::raw_bag_features(Tape& tape, std::size_t position) {
    const SampledBag& s = sampled_[position];
    std::vector<Var> rows;
    rows.reserve(s.selected_indices.size());
    if (prefix_depth_ == backbone_.blocks().size()) {
        const Tensor& f = cache_->features[position];
        for (auto j : s.selected_indices) rows.push_back(tape.constant(f.row(j)));
        return rows;
    }
    auto blocks = bind_backbone(tape, registry_, backbone_, config_.uses_adapters());
    if (bank_) {
        std::vector<Var> prompt_vars;
        for (ParamId id : bank_->prompts) prompt_vars.push_back(tape.param(registry_, id));
        for (Var x : build_prompted_bag(tape, s, assignment_, prompt_vars, *bank_, bags_[position].patches))
            rows.push_back(backbone_features(tape, x, blocks));
        return rows;
    }
    for (std::size_t k = 0; k < s.selected_indices.size(); ++k) {
        const Tensor& input = prefix_depth_ == 0 ? bags_[position].patches[s.selected_indices[k]] : prefix_[position][k];
        rows.push_back(backbone_features(tape, tape.constant(input), blocks, prefix_depth_));
    }
    return rows;
}

Var Pipeline::bag_logit(Tape& tape, std::size_t position) {
    std::vector<Var> rows = raw_bag_features(tape, position);
    for (Var& r : rows) r = standardise(tape, r);
    const BoundHead head = bind_head(tape, registry_, head_);
    return classify_logit(tape, aggregate(tape, tape.stack_rows(rows), head), head);
}

Var Pipeline::step_loss(Tape& tape, std::size_t position) {
    prepare();
    if (position >= bags_.size()) throw InvalidArgument("step_loss: bag position out of range");
    return bag_loss(tape, bag_logit(tape, position), bags_[position].label);
}

double Pipeline::train_epoch(std::size_t epoch, Adam& adam) {
    std::vector<std::size_t> order = train_;
    Rng rng(mix_seed(mix_seed(config_.seed, kShuffleStream), epoch));
    rng.shuffle(order);
    const double prompt_lr = cosine_lr(config_.prompt_lr0, epoch, config_.epochs);
    const auto not_prompt = [](const Parameter& p) { return !starts_with(p.name, "pvp.prompt."); };
    double total = 0.0;
    for (std::size_t step = 0; step < order.size(); ++step) {
        const std::size_t p = order[step];
        try {
            registry_.zero_grad();
            Tape tape;
            Var loss = step_loss(tape, p);
            total += tape.value(loss)[0];
            tape.backward(loss);
            adam.step(registry_, not_prompt);
            if (bank_)
                for (ParamId id : bank_->prompts) sgd_update(registry_.at(id), prompt_lr, &bank_->mask);
        } catch (const NonFiniteError& e) {
            throw Error("training diverged at epoch " + std::to_string(epoch + 1) + ", step " +
                        std::to_string(step + 1) + " (bag " + std::to_string(bags_[p].bag_id) + "): " + e.what());
        }
    }
    return total / static_cast<double>(order.size());
}

SplitMetrics Pipeline::evaluate(std::span<const std::size_t> positions, std::vector<BagScore>* scores) {
    prepare();
    std::vector<double> probs;
    std::vector<int> labels;
    for (auto p : positions) {
        Tape tape(false);
        probs.push_back(sigmoid(tape.value(bag_logit(tape, p))[0]));
        labels.push_back(bags_[p].label);
        if (scores) scores->push_back(BagScore{bags_[p].bag_id, bags_[p].label, probs.back()});
    }
    SplitMetrics m;
    m.n_samples = positions.size();
    m.auc = auc(probs, labels);
    const auto fa = f1_acc(probs, labels);
    m.f1 = fa.f1;
    m.acc = fa.acc;
    return m;
}

void Pipeline::restore(const std::vector<NamedTensor>& snapshot) {
    prepare();
    restore_values(registry_, snapshot);
}

RunResult Pipeline::run() {
    const auto start = std::chrono::steady_clock::now();
    prepare();
    RunResult out;
    out.config = config_;
    out.dataset_checksum = cache_->key.substr(0, cache_->key.find(':'));
    out.backbone_checksum = backbone_.conv_checksum(registry_);
    out.scorer_checksum = scorer_checksum_;
    out.scorer_trace = scorer_trace_;
    out.n_train = train_.size();
    out.n_val = split_.val.size();
    out.n_test = split_.test.size();
    for (const auto& s : sampled_) out.selected_patches += s.selected_indices.size();
    for (const auto& p : registry_) {
        out.initial_checksums[p.name] = checksum(p.value);
        if (p.trainable) out.trainable_names.push_back(p.name);
    }
    out.head_params = parameter_count(head_, registry_);
    out.trainable_params = count_trainable(registry_, bank_);

    Adam adam(config_.adam);
    double best_auc = -1.0;
    for (std::size_t e = 0; e < config_.epochs; ++e) {
        EpochRecord rec;
        rec.epoch = e + 1;
        rec.prompt_lr = bank_ ? cosine_lr(config_.prompt_lr0, e, config_.epochs) : 0.0;
        rec.train_loss = train_epoch(e, adam);
        rec.val_auc = evaluate(split_.val).auc;
        out.trace.push_back(rec);
        if (rec.val_auc > best_auc) {
            best_auc = rec.val_auc;
            out.best_epoch = rec.epoch;
            out.snapshot = snapshot_values(registry_);
        }
    }
    restore_values(registry_, out.snapshot);
    out.val = evaluate(split_.val);
    out.test = evaluate(split_.test, &out.test_scores);
    for (const auto& p : registry_) out.final_checksums[p.name] = checksum(p.value);
    out.final_backbone_checksum = backbone_.conv_checksum(registry_);
    out.sampled = sampled_;
    out.centroids = centroids_;
    out.assignment = assignment_;
    out.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace pamt
