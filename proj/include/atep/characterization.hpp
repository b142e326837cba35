#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "atep/common.hpp"
#include "atep/csv.hpp"
#include "atep/io.hpp"
#include "atep/parallel.hpp"

namespace atep {

struct CharacterizationError : Error {
    using Error::Error;
};

struct ImuSample {
    double timestamp = 0.0;
    Eigen::Vector3d gyro = Eigen::Vector3d::Zero();   // rad/s
    Eigen::Vector3d accel = Eigen::Vector3d::Zero();  // m/s^2
};

/// One keyframe's raw sensor data. At least one modality must be present;
/// imu_window holds the samples between the previous frame and this one.
struct Frame {
    double timestamp = 0.0;
    std::optional<Image> pixels;
    std::vector<ImuSample> imu_window;
};

// The default characterization metric set (m = 10). Image metrics cover
// exposure, contrast, texture and blur; inertial metrics cover motion
// intensity. The set is configurable; matrix height follows the config.
enum class Metric {
    brightness,      // mean intensity
    contrast,        // intensity standard deviation
    entropy,         // 8-bit histogram Shannon entropy, bits
    sharpness,       // variance of 3x3 Laplacian response, zero-padded borders
    gradient_mean,   // mean central-difference gradient magnitude
    under_exposed,   // fraction of pixels <= 10
    over_exposed,    // fraction of pixels >= 245
    gyro_mean,       // mean gyro magnitude over the window
    accel_mean,      // mean accel magnitude over the window
    gyro_std,        // std of gyro magnitude over the window
};

inline const char* metric_name(Metric m) {
    switch (m) {
        case Metric::brightness: return "brightness";
        case Metric::contrast: return "contrast";
        case Metric::entropy: return "entropy";
        case Metric::sharpness: return "sharpness";
        case Metric::gradient_mean: return "gradient_mean";
        case Metric::under_exposed: return "under_exposed";
        case Metric::over_exposed: return "over_exposed";
        case Metric::gyro_mean: return "gyro_mean";
        case Metric::accel_mean: return "accel_mean";
        case Metric::gyro_std: return "gyro_std";
    }
    return "?";
}

inline bool metric_uses_image(Metric m) {
    switch (m) {
        case Metric::gyro_mean:
        case Metric::accel_mean:
        case Metric::gyro_std: return false;
        default: return true;
    }
}

inline std::vector<Metric> default_metrics() {
    return {Metric::brightness, Metric::contrast,     Metric::entropy,
            Metric::sharpness,  Metric::gradient_mean, Metric::under_exposed,
            Metric::over_exposed, Metric::gyro_mean,  Metric::accel_mean,
            Metric::gyro_std};
}

/// m metrics x n frames matrix for one (sub-)sequence.
struct CharacterizationMatrix {
    Eigen::MatrixXd values;  // m x n
    std::vector<std::string> metric_names;
    std::string sequence_id;

    int metric_count() const { return int(values.rows()); }
    int frame_count() const { return int(values.cols()); }
};

/// Per-frame metric values plus a coverage flag per entry; entries whose
/// modality is absent hold the neutral value 0 and covered=false.
struct FrameCharacterization {
    std::vector<double> values;
    std::vector<bool> covered;
};

namespace detail {

struct ImageStats {
    double mean = 0, stddev = 0, entropy = 0, laplacian_var = 0, gradient_mean = 0;
    double under = 0, over = 0;
};

inline ImageStats image_stats(const Image& img) {
    const int w = img.width, h = img.height;
    const std::size_t n = std::size_t(w) * h;
    ImageStats s;

    double sum = 0, sum2 = 0;
    std::size_t under = 0, over = 0;
    std::array<std::size_t, 256> hist{};
    for (uint8_t p : img.pixels) {
        sum += p;
        sum2 += double(p) * p;
        hist[p]++;
        if (p <= 10) ++under;
        if (p >= 245) ++over;
    }
    s.mean = sum / double(n);
    double var = sum2 / double(n) - s.mean * s.mean;
    s.stddev = var > 0 ? std::sqrt(var) : 0.0;
    s.under = double(under) / double(n);
    s.over = double(over) / double(n);
    for (std::size_t c : hist) {
        if (c == 0) continue;
        double p = double(c) / double(n);
        s.entropy -= p * std::log2(p);
    }

    // 3x3 Laplacian [0 1 0; 1 -4 1; 0 1 0], out-of-image neighbors read as 0.
    auto px = [&](int r, int c) -> double {
        if (r < 0 || r >= h || c < 0 || c >= w) return 0.0;
        return double(img.at(r, c));
    };
    double lsum = 0, lsum2 = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double v = px(r - 1, c) + px(r + 1, c) + px(r, c - 1) + px(r, c + 1) - 4.0 * px(r, c);
            lsum += v;
            lsum2 += v * v;
        }
    double lmean = lsum / double(n);
    double lvar = lsum2 / double(n) - lmean * lmean;
    s.laplacian_var = lvar > 0 ? lvar : 0.0;

    // Central differences in the interior, one-sided at the borders.
    double gsum = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double gx = (c == 0)       ? px(r, 1) - px(r, 0)
                        : (c == w - 1) ? px(r, w - 1) - px(r, w - 2)
                                       : 0.5 * (px(r, c + 1) - px(r, c - 1));
            double gy = (r == 0)       ? px(1, c) - px(0, c)
                        : (r == h - 1) ? px(h - 1, c) - px(h - 2, c)
                                       : 0.5 * (px(r + 1, c) - px(r - 1, c));
            gsum += std::sqrt(gx * gx + gy * gy);
        }
    s.gradient_mean = gsum / double(n);
    return s;
}

struct ImuStats {
    double gyro_mean = 0, accel_mean = 0, gyro_std = 0;
};

inline ImuStats imu_stats(const std::vector<ImuSample>& window) {
    ImuStats s;
    if (window.empty()) return s;
    double gsum = 0, gsum2 = 0, asum = 0;
    for (const auto& m : window) {
        double g = m.gyro.norm();
        gsum += g;
        gsum2 += g * g;
        asum += m.accel.norm();
    }
    double n = double(window.size());
    s.gyro_mean = gsum / n;
    s.accel_mean = asum / n;
    double var = gsum2 / n - s.gyro_mean * s.gyro_mean;
    s.gyro_std = var > 0 ? std::sqrt(var) : 0.0;
    return s;
}

}  // namespace detail

/// Evaluate the configured metrics on one frame. Metrics whose modality is
/// absent get the neutral value 0 and covered=false; if no configured metric
/// is applicable at all, the frame cannot be characterized.
inline FrameCharacterization characterize_frame(const Frame& frame, const std::vector<Metric>& config) {
    if (config.empty()) throw InvalidInput("characterize_frame: empty metric set");
    const bool has_image = frame.pixels.has_value();
    const bool has_imu = !frame.imu_window.empty();
    if (!has_image && !has_imu)
        throw CharacterizationError("frame has neither image nor IMU data");
    if (has_image && (frame.pixels->width < 8 || frame.pixels->height < 8))
        throw CharacterizationError("image smaller than 8x8");

    std::optional<detail::ImageStats> img;
    if (has_image) img = detail::image_stats(*frame.pixels);
    detail::ImuStats imu = detail::imu_stats(frame.imu_window);

    FrameCharacterization out;
    out.values.reserve(config.size());
    out.covered.reserve(config.size());
    bool any_covered = false;
    for (Metric m : config) {
        bool covered = metric_uses_image(m) ? has_image : has_imu;
        double v = 0.0;
        if (covered) {
            switch (m) {
                case Metric::brightness: v = img->mean; break;
                case Metric::contrast: v = img->stddev; break;
                case Metric::entropy: v = img->entropy; break;
                case Metric::sharpness: v = img->laplacian_var; break;
                case Metric::gradient_mean: v = img->gradient_mean; break;
                case Metric::under_exposed: v = img->under; break;
                case Metric::over_exposed: v = img->over; break;
                case Metric::gyro_mean: v = imu.gyro_mean; break;
                case Metric::accel_mean: v = imu.accel_mean; break;
                case Metric::gyro_std: v = imu.gyro_std; break;
            }
        }
        if (!std::isfinite(v)) throw CharacterizationError(std::string("non-finite value for metric ") + metric_name(m));
        out.values.push_back(v);
        out.covered.push_back(covered);
        any_covered |= covered;
    }
    if (!any_covered)
        throw CharacterizationError("no configured metric applicable to this frame");
    return out;
}

/// Column j of the result is characterize_frame(frames[j]); columns depend
/// only on their own frame.
inline CharacterizationMatrix characterize_sequence(const std::vector<Frame>& frames,
                                                    const std::vector<Metric>& config,
                                                    const std::string& sequence_id = "",
                                                    int jobs = 1) {
    if (frames.empty()) throw InvalidInput("characterize_sequence: no frames");
    CharacterizationMatrix mat;
    mat.sequence_id = sequence_id;
    for (Metric m : config) mat.metric_names.emplace_back(metric_name(m));
    mat.values.resize(long(config.size()), long(frames.size()));
    std::vector<std::string> errors(frames.size());
    parallel_for(frames.size(), jobs, [&](std::size_t j) {
        try {
            FrameCharacterization fc = characterize_frame(frames[j], config);
            for (std::size_t i = 0; i < fc.values.size(); ++i) mat.values(long(i), long(j)) = fc.values[i];
        } catch (const Error& e) {
            errors[j] = e.what();
        }
    });
    for (std::size_t j = 0; j < errors.size(); ++j)
        if (!errors[j].empty())
            throw CharacterizationError("frame " + std::to_string(j) + ": " + errors[j]);
    return mat;
}

// ---- sequence directory loading ----

namespace detail {
inline bool looks_like_header(const std::vector<std::string>& fields) {
    if (fields.empty()) return false;
    double v;
    auto res = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), v);
    return res.ec != std::errc() || res.ptr != fields[0].data() + fields[0].size();
}
}  // namespace detail

/// Load frames from an index CSV (timestamp, image_path) and an optional IMU
/// CSV (timestamp, gx, gy, gz, ax, ay, az). Image paths are relative to the
/// index file. IMU samples with t in (prev frame t, frame t] form each
/// frame's window; the first frame takes every earlier sample.
inline std::vector<Frame> load_sequence_frames(const std::string& index_csv_path,
                                               const std::optional<std::string>& imu_csv_path = {}) {
    namespace fs = std::filesystem;
    std::ifstream in(index_csv_path);
    if (!in) throw IoError("cannot open frame index " + index_csv_path);
    fs::path base = fs::path(index_csv_path).parent_path();

    std::vector<std::pair<double, std::string>> entries;
    std::string line;
    bool first = true;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_csv_line(line);
        if (first && detail::looks_like_header(fields)) {
            first = false;
            continue;
        }
        first = false;
        if (fields.size() != 2)
            throw ParseError(index_csv_path + ":" + std::to_string(line_no) + ": expected 'timestamp,image_path'");
        entries.emplace_back(parse_double(fields[0], index_csv_path), fields[1]);
    }
    if (entries.empty()) throw InvalidInput("empty frame index " + index_csv_path);

    std::vector<ImuSample> imu;
    if (imu_csv_path) {
        CsvTable t = read_csv(*imu_csv_path);
        // accept a headerless file too: read_csv treats the first line as
        // header, so re-parse it when it is numeric
        std::vector<std::vector<std::string>> rows = t.rows;
        if (!detail::looks_like_header(t.header)) rows.insert(rows.begin(), t.header);
        for (const auto& r : rows) {
            if (r.size() != 7)
                throw ParseError(*imu_csv_path + ": expected 'timestamp,gx,gy,gz,ax,ay,az'");
            ImuSample s;
            s.timestamp = parse_double(r[0], *imu_csv_path);
            s.gyro = {parse_double(r[1], *imu_csv_path), parse_double(r[2], *imu_csv_path),
                      parse_double(r[3], *imu_csv_path)};
            s.accel = {parse_double(r[4], *imu_csv_path), parse_double(r[5], *imu_csv_path),
                       parse_double(r[6], *imu_csv_path)};
            imu.push_back(s);
        }
        std::stable_sort(imu.begin(), imu.end(),
                         [](const ImuSample& a, const ImuSample& b) { return a.timestamp < b.timestamp; });
    }

    std::vector<Frame> frames;
    frames.reserve(entries.size());
    std::size_t imu_pos = 0;
    double prev_t = -std::numeric_limits<double>::infinity();
    for (const auto& [t, rel] : entries) {
        Frame f;
        f.timestamp = t;
        f.pixels = read_pgm((base / rel).string());
        while (imu_pos < imu.size() && imu[imu_pos].timestamp <= t) {
            if (imu[imu_pos].timestamp > prev_t) f.imu_window.push_back(imu[imu_pos]);
            ++imu_pos;
        }
        prev_t = t;
        frames.push_back(std::move(f));
    }
    return frames;
}

// ---- matrix persistence (CSV, metric names as header, one row per frame) ----

inline std::string matrix_to_csv(const CharacterizationMatrix& mat) {
    std::string out = join_csv(mat.metric_names) + "\n";
    for (int j = 0; j < mat.frame_count(); ++j) {
        for (int i = 0; i < mat.metric_count(); ++i) {
            if (i) out += ',';
            out += format_double(mat.values(i, j));
        }
        out += '\n';
    }
    return out;
}

inline CharacterizationMatrix matrix_from_csv(const std::string& path, const std::string& sequence_id = "") {
    CsvTable t = read_csv(path);
    CharacterizationMatrix mat;
    mat.sequence_id = sequence_id;
    mat.metric_names = t.header;
    mat.values.resize(long(t.header.size()), long(t.rows.size()));
    for (std::size_t j = 0; j < t.rows.size(); ++j) {
        if (t.rows[j].size() != t.header.size()) throw ParseError(path + ": ragged row in matrix CSV");
        for (std::size_t i = 0; i < t.header.size(); ++i)
            mat.values(long(i), long(j)) = parse_double(t.rows[j][i], path);
    }
    return mat;
}

}  // namespace atep
