#include "scp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "scp/log.hpp"

namespace scp {
namespace {

constexpr double kFar = 1e30;

void require_same(const BinaryVolume& a, const BinaryVolume& b, const char* who) {
    if (a.shape != b.shape) {
        auto s = [](const BinaryVolume& v) {
            return std::to_string(v.shape[0]) + "x" + std::to_string(v.shape[1]) + "x" + std::to_string(v.shape[2]);
        };
        throw InvalidInput(std::string(who) + ": shape mismatch " + s(a) + " vs " + s(b));
    }
}

// Lower envelope of parabolas along one line with sample pitch `step`.
void distance_1d(const double* f, double* d, int n, std::size_t stride, double step, std::vector<int>& v,
                 std::vector<double>& z, std::vector<double>& line) {
    line.resize(n);
    for (int i = 0; i < n; ++i) line[i] = f[i * stride];
    v.resize(n);
    z.resize(n + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        const double pq = q * step;
        auto intersect = [&](int r) {
            const double pr = r * step;
            return ((line[q] + pq * pq) - (line[r] + pr * pr)) / (2.0 * (pq - pr));
        };
        double s = intersect(v[k]);
        while (s <= z[k]) {
            --k;
            s = intersect(v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q * step) ++k;
        const double dq = (q - v[k]) * step;
        d[q * stride] = dq * dq + line[v[k]];
    }
}

double directed_mean(const std::vector<std::array<int, 3>>& from, const std::vector<double>& field,
                     const BinaryVolume& grid) {
    double acc = 0.0;
    for (const auto& p : from) acc += std::sqrt(field[grid.index(p[0], p[1], p[2])]);
    return acc / static_cast<double>(from.size());
}

}  // namespace

std::size_t BinaryVolume::count() const {
    return static_cast<std::size_t>(std::count_if(voxels.begin(), voxels.end(), [](auto v) { return v != 0; }));
}

double dice_score(const BinaryVolume& pred, const BinaryVolume& gt) {
    require_same(pred, gt, "dice_score");
    std::size_t a = 0, b = 0, both = 0;
    for (std::size_t i = 0; i < pred.voxels.size(); ++i) {
        const bool p = pred.voxels[i] != 0, g = gt.voxels[i] != 0;
        a += p;
        b += g;
        both += p && g;
    }
    if (a + b == 0) return 100.0;
    return 100.0 * 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

std::vector<std::array<int, 3>> surface_voxels(const BinaryVolume& mask) {
    std::vector<std::array<int, 3>> out;
    const auto [d, h, w] = mask.shape;
    auto bg = [&](int z, int y, int x) {
        return z < 0 || z >= d || y < 0 || y >= h || x < 0 || x >= w || mask.at(z, y, x) == 0;
    };
    for (int z = 0; z < d; ++z) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (mask.at(z, y, x) == 0) continue;
                if (bg(z - 1, y, x) || bg(z + 1, y, x) || bg(z, y - 1, x) || bg(z, y + 1, x) || bg(z, y, x - 1) ||
                    bg(z, y, x + 1)) {
                    out.push_back({z, y, x});
                }
            }
        }
    }
    return out;
}

std::vector<double> squared_distance_transform(const BinaryVolume& sites, const Spacing& spacing) {
    const auto [d, h, w] = sites.shape;
    std::vector<double> field(sites.voxels.size());
    for (std::size_t i = 0; i < field.size(); ++i) field[i] = sites.voxels[i] ? 0.0 : kFar;

    std::vector<int> v;
    std::vector<double> z, line;
    // Along x, then y, then z; each pass is exact given the previous one.
    for (int zz = 0; zz < d; ++zz) {
        for (int y = 0; y < h; ++y) {
            double* row = field.data() + sites.index(zz, y, 0);
            distance_1d(row, row, w, 1, spacing[2], v, z, line);
        }
    }
    for (int zz = 0; zz < d; ++zz) {
        for (int x = 0; x < w; ++x) {
            double* col = field.data() + sites.index(zz, 0, x);
            distance_1d(col, col, h, static_cast<std::size_t>(w), spacing[1], v, z, line);
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double* col = field.data() + sites.index(0, y, x);
            distance_1d(col, col, d, static_cast<std::size_t>(h) * w, spacing[0], v, z, line);
        }
    }
    return field;
}

std::optional<double> assd(const BinaryVolume& pred, const BinaryVolume& gt, const Spacing& spacing) {
    require_same(pred, gt, "assd");
    for (double s : spacing) {
        if (!(s > 0.0)) throw InvalidInput("assd: spacing must be positive");
    }
    const auto sp = surface_voxels(pred);
    const auto sg = surface_voxels(gt);
    if (sp.empty() || sg.empty()) return std::nullopt;

    BinaryVolume pred_sites(pred.shape), gt_sites(gt.shape);
    for (const auto& p : sp) pred_sites.at(p[0], p[1], p[2]) = 1;
    for (const auto& p : sg) gt_sites.at(p[0], p[1], p[2]) = 1;
    const auto to_gt = squared_distance_transform(gt_sites, spacing);
    const auto to_pred = squared_distance_transform(pred_sites, spacing);
    return 0.5 * (directed_mean(sp, to_gt, gt) + directed_mean(sg, to_pred, pred));
}

// ---------------------------------------------------------------- case-level evaluation

BinaryVolume class_mask(const LabelVolume& volume, int cls) {
    BinaryVolume m(volume.shape);
    for (std::size_t i = 0; i < volume.labels.size(); ++i) m.voxels[i] = volume.labels[i] == cls;
    return m;
}

CaseResult evaluate_case(const LabelVolume& pred, const LabelVolume& gt, int class_count) {
    if (pred.shape != gt.shape) throw InvalidInput("evaluate_case: prediction and ground truth differ in shape");
    CaseResult r;
    r.case_id = gt.case_id;
    r.spacing = gt.spacing;
    r.spacing_from_header = gt.spacing_from_header;
    for (int c = 1; c < class_count; ++c) {
        const auto p = class_mask(pred, c);
        const auto g = class_mask(gt, c);
        r.per_class.push_back({c, dice_score(p, g), assd(p, g, gt.spacing)});
    }
    return r;
}

EvaluationSummary summarize(std::vector<CaseResult> cases, int class_count) {
    std::sort(cases.begin(), cases.end(), [](const auto& a, const auto& b) { return a.case_id < b.case_id; });
    EvaluationSummary s;
    for (int c = 1; c < class_count; ++c) s.classes.push_back(c);
    const std::size_t k = s.classes.size();
    s.class_dsc.assign(k, 0.0);
    s.class_assd.assign(k, std::nullopt);
    std::vector<double> assd_sum(k, 0.0);
    std::vector<int> assd_n(k, 0);
    for (const auto& cr : cases) {
        for (std::size_t j = 0; j < k; ++j) {
            const auto& m = cr.per_class.at(j);
            s.class_dsc[j] += m.dsc;
            if (m.assd) {
                assd_sum[j] += *m.assd;
                ++assd_n[j];
            } else {
                ++s.undefined_assd;
                log::warn("ASSD undefined for case " + cr.case_id + " class " + std::to_string(m.cls) +
                          " (empty surface); excluded from averages");
            }
        }
    }
    double dsc_total = 0.0, assd_total = 0.0;
    int assd_classes = 0;
    for (std::size_t j = 0; j < k; ++j) {
        if (!cases.empty()) s.class_dsc[j] /= static_cast<double>(cases.size());
        dsc_total += s.class_dsc[j];
        if (assd_n[j] > 0) {
            s.class_assd[j] = assd_sum[j] / assd_n[j];
            assd_total += *s.class_assd[j];
            ++assd_classes;
        }
    }
    s.mean_dsc = k ? dsc_total / static_cast<double>(k) : 0.0;
    if (assd_classes > 0) s.mean_assd = assd_total / assd_classes;
    s.cases = std::move(cases);
    return s;
}

LabelVolume ground_truth_volume(const PreparedCase& pc) {
    if (!pc.has_label()) throw InvalidInput("case '" + pc.case_id + "' has no labels to evaluate against");
    LabelVolume v;
    v.case_id = pc.case_id;
    const int h = pc.images.front().height(), w = pc.images.front().width();
    v.shape = {pc.slices(), h, w};
    v.spacing = pc.spacing_mm;
    v.spacing_from_header = pc.spacing_from_header;
    for (const auto& l : pc.labels) v.labels.insert(v.labels.end(), l.flat().begin(), l.flat().end());
    return v;
}

std::vector<LabelVolume> predict_split(nn::UNet<float>& model, const SliceDataset& data, const std::string& split) {
    std::vector<LabelVolume> out;
    for (const auto* pc : data.split_cases(split)) {
        LabelVolume v;
        v.case_id = pc->case_id;
        const int h = pc->images.front().height(), w = pc->images.front().width();
        v.shape = {pc->slices(), h, w};
        v.spacing = pc->spacing_mm;
        v.spacing_from_header = pc->spacing_from_header;
        v.labels.reserve(static_cast<std::size_t>(pc->slices()) * h * w);

        std::vector<const Tensor3<float>*> images;
        for (const auto& img : pc->images) images.push_back(&img);
        const auto batch = model.forward(nn::pack_images<float>(images), false);
        for (int s = 0; s < pc->slices(); ++s) {
            const auto labels = argmax_labels(nn::extract_sample<double>(batch.logits, s));
            v.labels.insert(v.labels.end(), labels.flat().begin(), labels.flat().end());
        }
        out.push_back(std::move(v));
    }
    return out;
}

EvaluationSummary evaluate_split(nn::UNet<float>& model, const SliceDataset& data, const std::string& split) {
    const auto cases = data.split_cases(split);
    if (cases.empty()) throw InvalidInput("evaluate_split: split '" + split + "' is empty");
    for (const auto* pc : cases) {
        if (!pc->has_label()) throw InvalidInput("evaluate_split: case '" + pc->case_id + "' in split '" + split +
                                                 "' has no labels");
    }
    const auto preds = predict_split(model, data, split);
    std::vector<CaseResult> results(cases.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < cases.size(); ++i) {
        results[i] = evaluate_case(preds[i], ground_truth_volume(*cases[i]), data.class_count());
    }
    return summarize(std::move(results), data.class_count());
}

// ---------------------------------------------------------------- reporting

std::string format_metrics_table(const std::vector<TableRow>& rows, const std::vector<std::string>& class_names) {
    std::ostringstream out;
    char buf[64];
    auto cell = [&](const std::optional<double>& v) {
        if (v) {
            std::snprintf(buf, sizeof buf, "%8.2f", *v);
        } else {
            std::snprintf(buf, sizeof buf, "%8s", "n/a");
        }
        return std::string(buf);
    };
    std::size_t label_width = 6;
    for (const auto& r : rows) label_width = std::max(label_width, r.label.size());

    out << std::string(label_width, ' ');
    for (const auto& name : class_names) {
        std::snprintf(buf, sizeof buf, " | %-17s", name.c_str());
        out << buf;
    }
    out << " | Avg\n" << std::string(label_width, ' ');
    for (std::size_t i = 0; i <= class_names.size(); ++i) out << " | DSC^     ASSDv   ";
    out << '\n' << std::string(label_width + 20 * (class_names.size() + 1), '-') << '\n';
    for (const auto& r : rows) {
        out << r.label << std::string(label_width - r.label.size(), ' ');
        if (!r.summary) {
            out << "  (failed)\n";
            continue;
        }
        for (std::size_t j = 0; j < r.summary->classes.size(); ++j) {
            out << " | " << cell(r.summary->class_dsc[j]) << ' ' << cell(r.summary->class_assd[j]);
        }
        out << " | " << cell(r.summary->mean_dsc) << ' ' << cell(r.summary->mean_assd) << '\n';
    }
    return out.str();
}

nlohmann::json summary_to_json(const EvaluationSummary& s) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json cases = nlohmann::json::array();
    for (const auto& c : s.cases) {
        nlohmann::json per = nlohmann::json::array();
        for (const auto& m : c.per_class) {
            per.push_back({{"class", m.cls}, {"dsc", m.dsc}, {"assd", opt(m.assd)}, {"defined", m.assd.has_value()}});
        }
        cases.push_back({{"case_id", c.case_id},
                         {"per_class", per},
                         {"spacing_mm", c.spacing},
                         {"spacing_source", c.spacing_from_header ? "header" : "unit"}});
    }
    nlohmann::json cls = nlohmann::json::array();
    for (std::size_t j = 0; j < s.classes.size(); ++j) {
        cls.push_back({{"class", s.classes[j]}, {"dsc", s.class_dsc[j]}, {"assd", opt(s.class_assd[j])}});
    }
    return {{"cases", cases},
            {"classes", cls},
            {"mean_dsc", s.mean_dsc},
            {"mean_assd", opt(s.mean_assd)},
            {"undefined_assd", s.undefined_assd}};
}

}  // namespace scp
