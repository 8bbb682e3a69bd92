#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "citynav/env.hpp"
#include "citynav/http_client.hpp"
#include "citynav/rng.hpp"

namespace citynav {

struct Detection {
    NodeId landmark = 0;
    RelPos rel;                // reported agent -> landmark estimate
    bool true_positive = true; // simulator bookkeeping, stripped before agents see it
};

struct PerceptionProfile {
    double recall = 1.0;
    double false_positive_rate = 0.0;
    double distance_noise_sigma = 0.0;
    double bearing_quantization_deg = 0.0; // 0 disables quantization
};

// Recognition rates of the two vision models the profiles are calibrated to.
constexpr double kFinetunedRecall = 0.9695;
constexpr double kFinetunedPrecision = 0.9868;
constexpr double kZeroshotRecall = 0.9347;
constexpr double kZeroshotPrecision = 0.0576;
constexpr double kDefaultDistanceSigma = 0.2;
constexpr double kDefaultBearingQuantization = 45.0;
constexpr double kSpuriousMinM = 200.0;
constexpr double kSpuriousMaxM = 2000.0;

enum class ProfileKind { oracle, finetuned, zeroshot };

inline std::optional<ProfileKind> parse_profile_kind(const std::string& s) {
    if (s == "oracle") return ProfileKind::oracle;
    if (s == "finetuned") return ProfileKind::finetuned;
    if (s == "zeroshot") return ProfileKind::zeroshot;
    return std::nullopt;
}

// precision = vr*recall / (vr*recall + (1-vr)*fp), solved for fp.
inline PerceptionProfile profile_from_table(ProfileKind kind, double visible_ratio,
                                            std::vector<std::string>* warnings = nullptr) {
    if (kind == ProfileKind::oracle) return {1.0, 0.0, 0.0, 0.0};
    if (!(visible_ratio > 0.0 && visible_ratio < 1.0)) {
        throw ValidationError("visible_ratio must be in (0,1)");
    }
    const double recall = kind == ProfileKind::finetuned ? kFinetunedRecall : kZeroshotRecall;
    const double precision = kind == ProfileKind::finetuned ? kFinetunedPrecision : kZeroshotPrecision;
    double fp = visible_ratio * recall * (1.0 / precision - 1.0) / (1.0 - visible_ratio);
    if (fp < 0.0) throw ValidationError("infeasible precision/prior combination");
    if (fp > 1.0) {
        if (warnings) {
            warnings->push_back("required false-positive rate " + std::to_string(fp) +
                                " exceeds 1; capping (precision this low fires on nearly everything)");
        }
        fp = 1.0;
    }
    return {recall, fp, kDefaultDistanceSigma, kDefaultBearingQuantization};
}

inline double quantize_bearing(double bearing_deg, double granularity_deg) {
    if (granularity_deg <= 0.0) return normalize_bearing(bearing_deg);
    return normalize_bearing(std::round(normalize_bearing(bearing_deg) / granularity_deg) * granularity_deg);
}

// One landmark per forked substream so that changing recall alone never flips
// an unrelated landmark's draw (monotonicity under profile changes).
inline std::vector<Detection> perceive(const EnvGraph& env, NodeId node, const PerceptionProfile& profile,
                                       Rng& rng) {
    const Node& n = env.node(node);
    std::vector<Detection> out;
    for (const auto& lm : env.landmarks()) {
        Rng sub = rng.fork(std::uint64_t(lm.id));
        const RelPos truth = rel_pos(n.coord, lm.coord);
        const bool visible = truth.distance_m <= lm.visibility_radius_m;
        const double u = sub.uniform01();
        if (visible) {
            if (u >= profile.recall) continue;
            Detection d;
            d.landmark = lm.id;
            d.true_positive = true;
            d.rel.distance_m = truth.distance_m * sub.lognormal_factor(profile.distance_noise_sigma);
            d.rel.bearing_deg = quantize_bearing(truth.bearing_deg, profile.bearing_quantization_deg);
            out.push_back(d);
        } else {
            if (u >= profile.false_positive_rate) continue;
            Detection d;
            d.landmark = lm.id;
            d.true_positive = false;
            d.rel.bearing_deg = quantize_bearing(sub.uniform(0.0, 360.0), profile.bearing_quantization_deg);
            d.rel.distance_m = sub.uniform(kSpuriousMinM, kSpuriousMaxM);
            out.push_back(d);
        }
    }
    rng.next(); // advance the parent stream once per call
    return out;
}

inline std::vector<Detection> strip_flags(std::vector<Detection> ds) {
    for (auto& d : ds) d.true_positive = true;
    return ds;
}

// Fraction of (node, landmark) pairs inside the visibility radius; this is
// the ratio the false-positive calibration needs.
inline double visible_pair_fraction(const EnvGraph& env) {
    const auto& ids = env.node_ids();
    const auto& lms = env.landmarks();
    if (ids.empty() || lms.empty()) throw ValidationError("visibility ratio needs nodes and landmarks");
    std::size_t seen = 0;
    for (NodeId id : ids) seen += env.visible_landmarks(id).size();
    return double(seen) / (double(ids.size()) * double(lms.size()));
}

// ---------------------------------------------------------------------------
// Remote vision backend
// ---------------------------------------------------------------------------

struct StreetView {
    std::string reference;  // opaque image handle the remote service resolves
    double bearing_deg = 0; // camera orientation along the incident edge
};

// "about 1600 meters", "roughly 1.6 km", "1,600m" and similar.
inline std::optional<double> parse_distance_m(const std::string& answer) {
    static const std::regex re(
        R"(([0-9][0-9,]*(?:\.[0-9]+)?)\s*(meters?|metres?|m\b|kilometers?|kilometres?|km\b))",
        std::regex::icase);
    std::smatch m;
    if (!std::regex_search(answer, m, re)) return std::nullopt;
    std::string num = m[1].str();
    num.erase(std::remove(num.begin(), num.end(), ','), num.end());
    double v = std::stod(num);
    const char unit = char(std::tolower(m[2].str()[0]));
    if (unit == 'k') v *= 1000.0;
    return v;
}

inline bool answer_is_yes(const std::string& answer) {
    const std::size_t i = answer.find_first_not_of(" \t\r\n");
    if (i == std::string::npos || i + 3 > answer.size()) return false;
    auto lc = [&](std::size_t k) { return char(std::tolower(static_cast<unsigned char>(answer[i + k]))); };
    return lc(0) == 'y' && lc(1) == 'e' && lc(2) == 's';
}

class VisionClient {
public:
    explicit VisionClient(HttpJsonClient http) : http_(std::move(http)) {}

    static std::optional<VisionClient> from_env() {
        auto http = HttpJsonClient::from_env("NAV_VLM_ENDPOINT", "NAV_VLM_API_KEY");
        if (!http) return std::nullopt;
        return VisionClient(std::move(*http));
    }

    std::string ask(const std::string& image, const std::string& question) const {
        nlohmann::json res = http_.post({{"image", image}, {"question", question}});
        if (!res.contains("answer") || !res["answer"].is_string()) {
            throw TransportError("vision endpoint returned no answer field");
        }
        return res["answer"].get<std::string>();
    }

private:
    HttpJsonClient http_;
};

// Three questions per (image, landmark): visibility, bounding box (kept only
// to phrase the distance question), distance. Unparseable answers skip the
// detection with a warning instead of failing the step.
inline std::vector<Detection> remote_perceive(const VisionClient& client, const std::vector<StreetView>& images,
                                              const std::vector<std::pair<NodeId, std::string>>& landmarks,
                                              std::vector<std::string>* warnings = nullptr) {
    std::vector<Detection> out;
    auto warn = [&](const std::string& msg) {
        if (warnings) warnings->push_back(msg);
    };
    for (const auto& img : images) {
        for (const auto& [id, name] : landmarks) {
            const std::string a1 = client.ask(img.reference, "Is the " + name + " visible in the image?");
            if (!answer_is_yes(a1)) continue;

            const std::string a2 = client.ask(
                img.reference, "The " + name + " is visible in the image, what's the bounding box of it in the image?");
            static const std::regex bbox_re(R"(\(([^()]*,[^()]*,[^()]*,[^()]*)\))");
            std::smatch m;
            const std::string bbox = std::regex_search(a2, m, bbox_re) ? "(" + m[1].str() + ")" : "(0, 0, 0, 0)";

            const std::string a3 =
                client.ask(img.reference, "The " + name + " is visible in the image and its bounding box is " + bbox +
                                              ", how far is it actually away from the camera?");
            const auto dist = parse_distance_m(a3);
            if (!dist) {
                warn("unparseable distance answer for " + name + ": " + a3);
                continue;
            }
            Detection d;
            d.landmark = id;
            d.rel = {normalize_bearing(img.bearing_deg), *dist};
            out.push_back(d);
        }
    }
    return out;
}

} // namespace citynav
