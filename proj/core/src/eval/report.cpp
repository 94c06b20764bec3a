#include "pamt/eval/report.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "pamt/numerics/errors.hpp"

namespace pamt {

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) throw InvalidArgument("mean_std: no values");
    MeanStd r;
    for (double v : values) r.mean += v;
    r.mean /= static_cast<double>(values.size());
    if (values.size() >= 2) {
        double ss = 0.0;
        for (double v : values) ss += (v - r.mean) * (v - r.mean);
        r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return r;
}

std::vector<ReportRow> build_report(std::span<const RunSummary> runs) {
    if (runs.empty()) throw InvalidArgument("report: no runs");
    std::vector<ReportRow> rows;
    std::vector<std::vector<const RunSummary*>> members;
    for (const auto& r : runs) {
        std::size_t i = 0;
        for (; i < rows.size(); ++i) {
            const auto& g = rows[i];
            if (g.strategy == r.strategy && g.components == r.components && g.head == r.head &&
                g.train_fraction == r.train_fraction)
                break;
        }
        if (i == rows.size()) {
            ReportRow g;
            g.strategy = r.strategy;
            g.components = r.components;
            g.head = r.head;
            g.train_fraction = r.train_fraction;
            g.trainable_params = r.trainable_params;
            g.head_params = r.head_params;
            rows.push_back(g);
            members.emplace_back();
        }
        members[i].push_back(&r);
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<double> f1, acc;
        for (const auto* r : members[i]) {
            rows[i].seeds.push_back(r->seed);
            rows[i].aucs.push_back(r->test.auc);
            f1.push_back(r->test.f1);
            acc.push_back(r->test.acc);
        }
        rows[i].auc = mean_std(rows[i].aucs);
        rows[i].f1 = mean_std(f1);
        rows[i].acc = mean_std(acc);
    }
    return rows;
}

namespace {

std::string fmt(double v) {
    std::ostringstream o;
    o << std::setprecision(17) << v;
    return o.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

nlohmann::ordered_json to_json(const MeanStd& m) {
    nlohmann::ordered_json j;
    j["mean"] = m.mean;
    j["std"] = m.std ? nlohmann::ordered_json(*m.std) : nlohmann::ordered_json(nullptr);
    return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

}  // namespace

void write_report(const std::filesystem::path& dir, std::span<const ReportRow> rows) {
    std::filesystem::create_directories(dir);
    std::ostringstream table;
    table << "strategy,components,head,train_fraction,n_seeds,auc_mean,auc_std,f1_mean,f1_std,acc_mean,acc_std,"
             "trainable_params,head_params,additional_params\n";
    std::ostringstream curve;
    curve << "strategy,components,head,fraction,mean_auc,std\n";
    nlohmann::ordered_json report = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        table << r.strategy << ',' << r.components << ',' << r.head << ',' << fmt(r.train_fraction) << ','
              << r.seeds.size() << ',' << fmt(r.auc.mean) << ',' << fmt(r.auc.std) << ',' << fmt(r.f1.mean) << ','
              << fmt(r.f1.std) << ',' << fmt(r.acc.mean) << ',' << fmt(r.acc.std) << ',' << r.trainable_params << ','
              << r.head_params << ',' << r.additional_params() << '\n';
        curve << r.strategy << ',' << r.components << ',' << r.head << ',' << fmt(r.train_fraction) << ','
              << fmt(r.auc.mean) << ',' << fmt(r.auc.std) << '\n';
        nlohmann::ordered_json j;
        j["strategy"] = r.strategy;
        j["components"] = r.components;
        j["head"] = r.head;
        j["train_fraction"] = r.train_fraction;
        j["seeds"] = r.seeds;
        j["auc_per_seed"] = r.aucs;
        j["auc"] = to_json(r.auc);
        j["f1"] = to_json(r.f1);
        j["acc"] = to_json(r.acc);
        j["trainable_params"] = r.trainable_params;
        j["head_params"] = r.head_params;
        j["additional_params"] = r.additional_params();
        report.push_back(j);
    }
    write_text(dir / "table.csv", table.str());
    write_text(dir / "curve.csv", curve.str());
    write_text(dir / "report.json", report.dump(2) + "\n");
}

}  // namespace pamt
