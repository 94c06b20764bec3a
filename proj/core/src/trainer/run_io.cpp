#include "pamt/trainer/run_io.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "pamt/numerics/errors.hpp"
#include "pamt/numerics/snapshot.hpp"

namespace pamt {

using nlohmann::ordered_json;

std::string git_blob_hash(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
        EVP_DigestUpdate(ctx, content.data(), content.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha1 digest failed");
    }
    EVP_MD_CTX_free(ctx);
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
    return out.str();
}

std::string git_blob_hash_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return git_blob_hash(buf.str());
}

namespace {

ordered_json config_json(const TrainConfig& c) {
    ordered_json j;
    j["strategy"] = std::string(to_string(c.strategy));
    j["rps"] = c.components.rps;
    j["pvp"] = c.components.pvp;
    j["amt"] = c.components.amt;
    j["head"] = std::string(to_string(c.head));
    j["attention_dim"] = c.attention_dim;
    j["epochs"] = c.epochs;
    j["adam_lr"] = c.adam.lr;
    j["adam_weight_decay"] = c.adam.weight_decay;
    j["adam_beta1"] = c.adam.beta1;
    j["adam_beta2"] = c.adam.beta2;
    j["adam_eps"] = c.adam.eps;
    j["prompt_lr0"] = c.prompt_lr0;
    j["topk"] = c.topk;
    j["clusters"] = c.clusters;
    j["pad_size"] = c.pad_size;
    j["scorer_epochs"] = c.scorer_epochs;
    j["scorer_lr"] = c.scorer_lr;
    j["kmeans_max_iters"] = c.kmeans_max_iters;
    j["kmeans_tol"] = c.kmeans_tol;
    j["seed"] = c.seed;
    j["train_fraction"] = c.train_fraction;
    j["block_channels"] = c.backbone.block_channels;
    j["input_size"] = c.backbone.input_size;
    j["input_channels"] = c.backbone.input_channels;
    if (c.backbone.adapter_positions)
        j["adapter_positions"] = std::vector<std::size_t>(c.backbone.adapter_positions->begin(),
                                                          c.backbone.adapter_positions->end());
    j["adapter_bottleneck_ratio"] = c.backbone.adapter_bottleneck_ratio;
    j["backbone_seed"] = c.backbone_seed;
    j["split_seed"] = c.split_seed;
    j["split_ratios"] = {c.ratios.train, c.ratios.val, c.ratios.test};
    return j;
}

ordered_json metrics_json(const SplitMetrics& m) {
    return ordered_json{{"auc", m.auc}, {"f1", m.f1}, {"acc", m.acc}, {"n_samples", m.n_samples}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

std::string config_to_json(const TrainConfig& config) { return config_json(config).dump(2); }

TrainConfig config_from_json(const std::string& text) {
    const auto j = ordered_json::parse(text);
    TrainConfig c;
    c.strategy = parse_tuning_strategy(j.at("strategy").get<std::string>());
    c.components = {j.at("rps").get<bool>(), j.at("pvp").get<bool>(), j.at("amt").get<bool>()};
    c.head = parse_mil_head_kind(j.at("head").get<std::string>());
    c.attention_dim = j.at("attention_dim");
    c.epochs = j.at("epochs");
    c.adam.lr = j.at("adam_lr");
    c.adam.weight_decay = j.at("adam_weight_decay");
    c.adam.beta1 = j.at("adam_beta1");
    c.adam.beta2 = j.at("adam_beta2");
    c.adam.eps = j.at("adam_eps");
    c.prompt_lr0 = j.at("prompt_lr0");
    c.topk = j.at("topk");
    c.clusters = j.at("clusters");
    c.pad_size = j.at("pad_size");
    c.scorer_epochs = j.at("scorer_epochs");
    c.scorer_lr = j.at("scorer_lr");
    c.kmeans_max_iters = j.at("kmeans_max_iters");
    c.kmeans_tol = j.at("kmeans_tol");
    c.seed = j.at("seed");
    c.train_fraction = j.at("train_fraction");
    c.backbone.block_channels = j.at("block_channels").get<std::vector<std::size_t>>();
    c.backbone.input_size = j.at("input_size");
    c.backbone.input_channels = j.at("input_channels");
    if (j.contains("adapter_positions")) {
        const auto v = j.at("adapter_positions").get<std::vector<std::size_t>>();
        c.backbone.adapter_positions = std::set<std::size_t>(v.begin(), v.end());
    }
    c.backbone.adapter_bottleneck_ratio = j.at("adapter_bottleneck_ratio");
    c.backbone_seed = j.at("backbone_seed");
    c.split_seed = j.at("split_seed");
    const auto r = j.at("split_ratios");
    c.ratios = {r.at(0), r.at(1), r.at(2)};
    return c;
}

void write_run(const std::filesystem::path& dir, const RunResult& r, const std::vector<std::filesystem::path>& inputs) {
    std::filesystem::create_directories(dir);

    ordered_json metrics;
    metrics["strategy"] = std::string(to_string(r.config.strategy));
    metrics["components"] = r.config.components.label();
    metrics["head"] = std::string(to_string(r.config.head));
    metrics["seed"] = r.config.seed;
    metrics["train_fraction"] = r.config.train_fraction;
    metrics["auc"] = r.test.auc;
    metrics["f1"] = r.test.f1;
    metrics["acc"] = r.test.acc;
    metrics["best_epoch"] = r.best_epoch;
    metrics["val"] = metrics_json(r.val);
    metrics["test"] = metrics_json(r.test);
    metrics["n_train"] = r.n_train;
    metrics["n_val"] = r.n_val;
    metrics["n_test"] = r.n_test;
    metrics["selected_patches"] = r.selected_patches;
    metrics["trainable_params"] = r.trainable_params;
    metrics["head_params"] = r.head_params;
    metrics["additional_params"] = r.additional_params();
    metrics["trainable_parameters"] = r.trainable_names;
    metrics["backbone_checksum_initial"] = r.backbone_checksum;
    metrics["backbone_checksum_final"] = r.final_backbone_checksum;
    write_text(dir / "metrics.json", metrics.dump(2) + "\n");

    ordered_json manifest;
    manifest["config"] = config_json(r.config);
    ordered_json in;
    in["dataset_checksum"] = r.dataset_checksum;
    for (const auto& p : inputs) in["files"][p.filename().string()] = git_blob_hash_file(p);
    manifest["inputs"] = in;
    manifest["backbone_checksum"] = r.backbone_checksum;
    manifest["scorer_checksum"] = r.scorer_checksum;
    manifest["created_at"] = utc_timestamp();
    manifest["elapsed_seconds"] = r.elapsed_seconds;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    std::ostringstream trace;
    trace << std::setprecision(17) << "epoch,train_loss,val_auc,prompt_lr\n";
    for (const auto& e : r.trace) trace << e.epoch << ',' << e.train_loss << ',' << e.val_auc << ',' << e.prompt_lr << '\n';
    write_text(dir / "loss_trace.csv", trace.str());

    std::ostringstream scorer;
    scorer << std::setprecision(17) << "epoch,loss\n";
    for (std::size_t i = 0; i < r.scorer_trace.size(); ++i) scorer << i + 1 << ',' << r.scorer_trace[i] << '\n';
    write_text(dir / "scorer_trace.csv", scorer.str());

    std::ostringstream scores;
    scores << std::setprecision(17) << "bag_id,label,probability\n";
    for (const auto& s : r.test_scores) scores << s.bag_id << ',' << s.label << ',' << s.probability << '\n';
    write_text(dir / "test_scores.csv", scores.str());

    write_snapshot(dir / "snapshot.bin", r.snapshot);
    write_sampled_csv(dir / "sampled.csv", r.sampled);
    ordered_json sm;
    sm["topk"] = r.config.components.rps ? ordered_json(r.config.topk) : ordered_json(nullptr);
    sm["scorer_checksum"] = r.scorer_checksum;
    sm["selected_patches"] = r.selected_patches;
    write_text(dir / "sampled_manifest.json", sm.dump(2) + "\n");

    if (r.centroids) {
        write_centroids_csv(dir / "centroids.csv", *r.centroids);
        write_assignments_csv(dir / "assignments.csv", r.assignment);
    }
}

RunSummary summarize_run(const RunResult& r) {
    RunSummary s;
    s.strategy = to_string(r.config.strategy);
    s.components = r.config.components.label();
    s.head = to_string(r.config.head);
    s.seed = r.config.seed;
    s.train_fraction = r.config.train_fraction;
    s.test = r.test;
    s.trainable_params = r.trainable_params;
    s.head_params = r.head_params;
    s.best_epoch = r.best_epoch;
    return s;
}

RunSummary read_run_summary(const std::filesystem::path& metrics_json) {
    std::ifstream in(metrics_json);
    if (!in) throw Error("cannot read " + metrics_json.string());
    const auto j = ordered_json::parse(in);
    RunSummary s;
    s.strategy = j.at("strategy").get<std::string>();
    s.components = j.at("components").get<std::string>();
    s.head = j.at("head").get<std::string>();
    s.seed = j.at("seed");
    s.train_fraction = j.at("train_fraction");
    const auto& t = j.at("test");
    s.test = SplitMetrics{t.at("auc"), t.at("f1"), t.at("acc"), t.at("n_samples")};
    s.trainable_params = j.at("trainable_params");
    s.head_params = j.at("head_params");
    s.best_epoch = j.at("best_epoch");
    return s;
}

}  // namespace pamt
