#pragma once

// Straight-line re-implementation of the relevancy update rules on plain
// nested vectors. Deliberately shares no code with the library so the two
// paths can check each other.

#include <stdexcept>
#include <string>
#include <vector>

namespace oracle {

using Mat = std::vector<std::vector<double>>;
using Cube = std::vector<Mat>; // [head][row][col]

struct Record {
    std::string kind; // self_joint | self_text | self_image | cross_ti | cross_it |
                      // enc_self | dec_self | dec_cross
    int layer = 0;
    Cube attention;
    Cube grad;
};

struct Maps {
    Mat joint;
    Mat tt, ii, ti, it;
    Mat ee, dd, de;
};

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, std::vector<double>(c, 0.0)); }

inline Mat eye(std::size_t n) {
    Mat m = zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
    return m;
}

inline Mat mul(const Mat& a, const Mat& b) {
    Mat out = zeros(a.size(), b[0].size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < b.size(); ++k)
            for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
    return out;
}

inline Mat tr(const Mat& a) {
    Mat out = zeros(a[0].size(), a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[0].size(); ++j) out[j][i] = a[i][j];
    return out;
}

inline Mat plus(const Mat& a, const Mat& b) {
    Mat out = a;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[0].size(); ++j) out[i][j] += b[i][j];
    return out;
}

inline Mat head_average(const Cube& attention, const Cube& grad) {
    const std::size_t h = attention.size(), s = attention[0].size(), q = attention[0][0].size();
    Mat out = zeros(s, q);
    for (std::size_t head = 0; head < h; ++head)
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = 0; j < q; ++j) {
                const double v = grad[head][i][j] * attention[head][i][j];
                if (v > 0.0) out[i][j] += v;
            }
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < q; ++j) out[i][j] /= static_cast<double>(h);
    return out;
}

inline Mat normalize(const Mat& r) {
    const std::size_t n = r.size();
    Mat out = zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += r[i][j] - (i == j ? 1.0 : 0.0);
        if (sum > 1e-12)
            for (std::size_t j = 0; j < n; ++j) out[i][j] = (r[i][j] - (i == j ? 1.0 : 0.0)) / sum;
        out[i][i] += 1.0;
    }
    return out;
}

// variant: full | no_normalization | no_aggregation | no_self_attention_cross
inline void rule_self(Mat& self_map, Mat* cross_map, const Mat& avg, const std::string& variant) {
    const bool aggregate = variant != "no_aggregation";
    Mat self_new = mul(avg, self_map);
    if (cross_map != nullptr) {
        Mat cross_new = mul(avg, *cross_map);
        *cross_map = aggregate ? plus(*cross_map, cross_new) : cross_new;
    }
    self_map = aggregate ? plus(self_map, self_new) : self_new;
}

inline void rule_cross(Mat& cross_sq, Mat* self_ss, const Mat& avg, const Mat& snap_ss,
                       const Mat& snap_qq, const Mat* snap_qs, const std::string& variant) {
    const bool aggregate = variant != "no_aggregation";
    Mat cross_new;
    if (variant == "no_self_attention_cross") {
        cross_new = avg;
    } else if (variant == "no_normalization") {
        cross_new = mul(tr(snap_ss), mul(avg, snap_qq));
    } else {
        cross_new = mul(tr(normalize(snap_ss)), mul(avg, normalize(snap_qq)));
    }
    cross_sq = aggregate ? plus(cross_sq, cross_new) : cross_new;

    if (self_ss != nullptr && snap_qs != nullptr) {
        Mat self_new = mul(avg, *snap_qs);
        *self_ss = aggregate ? plus(*self_ss, self_new) : self_new;
    }
}

inline Maps propagate(const std::string& arch, const std::vector<Record>& records,
                      const std::string& variant) {
    Maps maps;
    auto dim_of = [&](const std::string& kind, bool rows) -> std::size_t {
        for (const Record& r : records)
            if (r.kind == kind) return rows ? r.attention[0].size() : r.attention[0][0].size();
        throw std::runtime_error("oracle: no record of kind " + kind);
    };

    if (arch == "pure_self") {
        maps.joint = eye(dim_of("self_joint", true));
    } else if (arch == "self_plus_co") {
        const std::size_t t = dim_of("self_text", true), i = dim_of("self_image", true);
        maps.tt = eye(t);
        maps.ii = eye(i);
        maps.ti = zeros(t, i);
        maps.it = zeros(i, t);
    } else {
        const std::size_t e = dim_of("enc_self", true), d = dim_of("dec_self", true);
        maps.ee = eye(e);
        maps.dd = eye(d);
        maps.de = zeros(d, e);
    }

    std::size_t idx = 0;
    while (idx < records.size()) {
        const Record& record = records[idx];
        const Mat avg = head_average(record.attention, record.grad);
        if (record.kind == "self_joint") {
            rule_self(maps.joint, nullptr, avg, variant);
            ++idx;
        } else if (record.kind == "self_text") {
            rule_self(maps.tt, &maps.ti, avg, variant);
            ++idx;
        } else if (record.kind == "self_image") {
            rule_self(maps.ii, &maps.it, avg, variant);
            ++idx;
        } else if (record.kind == "enc_self") {
            rule_self(maps.ee, nullptr, avg, variant);
            ++idx;
        } else if (record.kind == "dec_self") {
            rule_self(maps.dd, &maps.de, avg, variant);
            ++idx;
        } else if (record.kind == "dec_cross") {
            rule_cross(maps.de, nullptr, avg, maps.dd, maps.ee, nullptr, variant);
            ++idx;
        } else if (record.kind == "cross_ti" || record.kind == "cross_it") {
            const Mat tt = maps.tt, ii = maps.ii, ti = maps.ti, it = maps.it;
            std::size_t stop = idx;
            while (stop < records.size() &&
                   (records[stop].kind == "cross_ti" || records[stop].kind == "cross_it") &&
                   records[stop].layer == record.layer)
                ++stop;
            for (std::size_t k = idx; k < stop; ++k) {
                const Mat a = head_average(records[k].attention, records[k].grad);
                if (records[k].kind == "cross_ti")
                    rule_cross(maps.ti, &maps.tt, a, tt, ii, &it, variant);
                else
                    rule_cross(maps.it, &maps.ii, a, ii, tt, &ti, variant);
            }
            idx = stop;
        } else {
            throw std::runtime_error("oracle: unknown kind " + record.kind);
        }
    }
    return maps;
}

} // namespace oracle
