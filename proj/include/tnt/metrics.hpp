// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "tnt/errors.hpp"

namespace tnt {

/// One logged training step. Serialized as a fixed-schema CSV row; the
/// formatting is locale-free and reproducible byte-for-byte given the same
/// run, which the determinism check relies on.
struct MetricsRow {
    std::uint64_t step = 0;
    std::uint64_t epoch = 0;
    std::string stage;        // early | late
    std::string branch;       // loss | size | - (early stage)
    double train_loss = 0.0;
    double eval_metric = 0.0;
    double s_hat = 0.0;       // relaxed size
    std::uint64_t s_eps = 0;  // thresholded exact size
    std::uint64_t total_params = 0;
    double compression_ratio = 0.0;
    std::string max_ranks;    // per tensorized layer, '|' separated
};

inline const char* metrics_csv_header() {
    return "step,epoch,stage,branch,train_loss,eval_metric,s_hat,s_eps,total_params,"
           "compression_ratio,max_ranks";
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string metrics_row_to_csv(const MetricsRow& r) {
    std::string out;
    out += std::to_string(r.step);
    out += ',';
    out += std::to_string(r.epoch);
    out += ',';
    out += r.stage;
    out += ',';
    out += r.branch;
    out += ',';
    out += format_double(r.train_loss);
    out += ',';
    out += format_double(r.eval_metric);
    out += ',';
    out += format_double(r.s_hat);
    out += ',';
    out += std::to_string(r.s_eps);
    out += ',';
    out += std::to_string(r.total_params);
    out += ',';
    out += format_double(r.compression_ratio);
    out += ',';
    out += r.max_ranks;
    return out;
}

class MetricsSink {
  public:
    virtual ~MetricsSink() = default;
    virtual void log(const MetricsRow& row) = 0;
};

class NullMetricsSink final : public MetricsSink {
  public:
    void log(const MetricsRow&) override {}
};

class VectorMetricsSink final : public MetricsSink {
  public:
    void log(const MetricsRow& row) override { rows.push_back(row); }
    std::vector<MetricsRow> rows;
};

class CsvMetricsSink final : public MetricsSink {
  public:
    explicit CsvMetricsSink(const std::string& path) : out_(path, std::ios::trunc) {
        if (!out_) throw ConfigError("cannot open metrics file: " + path);
        out_ << metrics_csv_header() << '\n';
    }

    void log(const MetricsRow& row) override { out_ << metrics_row_to_csv(row) << '\n'; }
    void flush() { out_.flush(); }

  private:
    std::ofstream out_;
};

}  // namespace tnt
