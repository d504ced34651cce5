#include "msgfield/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "msgfield/errors.hpp"
#include "msgfield/projection.hpp"

namespace msgfield {

namespace {

void check_mask_shape(const Camera& cam, const Mask& mask, const char* who) {
  if (mask.width != cam.width || mask.height != cam.height)
    throw ShapeMismatch(std::string(who) + ": mask is " + std::to_string(mask.width) + "x" +
                        std::to_string(mask.height) + " but camera expects " +
                        std::to_string(cam.width) + "x" + std::to_string(cam.height));
}

}  // namespace

void check_semantic_table(const SemanticTable& table) {
  if (table.canon.empty()) throw DomainError("semantic table: no canonical phrase vectors");
  const Eigen::Index dim = table.canon.front().size();
  if (dim <= 0) throw DimMismatch("semantic table: zero-dimensional feature");
  auto check_vec = [dim](const Eigen::VectorXd& v, const std::string& who) {
    if (v.size() != dim)
      throw DimMismatch("semantic table: " + who + " has dimension " + std::to_string(v.size()) +
                        ", expected " + std::to_string(dim));
    if (std::abs(v.norm() - 1.0) > 1e-5)
      throw DomainError("semantic table: " + who + " is not unit norm");
  };
  for (size_t i = 0; i < table.canon.size(); ++i)
    check_vec(table.canon[i], "canon[" + std::to_string(i) + "]");
  for (const auto& [label, vec] : table.entries)
    check_vec(vec, "label " + std::to_string(label));
}

std::vector<size_t> candidate_primitives(const Scene& scene, const Camera& cam,
                                         const Mask& mask) {
  check_mask_shape(cam, mask, "candidate_primitives");
  std::vector<size_t> out;
  for (size_t i = 0; i < scene.size(); ++i) {
    const ProjectedSplat ps = splat_projection(scene.primitives[i], cam);
    if (ps.valid && bounds_in_mask(ps, mask)) out.push_back(i);
  }
  return out;
}

std::vector<size_t> foreground_filter(const Scene& scene, const Camera& cam, const Mask& mask,
                                      const std::vector<size_t>& candidates, double tau_g,
                                      const RenderConfig& cfg) {
  check_mask_shape(cam, mask, "foreground_filter");
  for (size_t idx : candidates)
    if (idx >= scene.size())
      throw DomainError("foreground_filter: candidate index " + std::to_string(idx) +
                        " out of range");
  const std::vector<double> weight = blend_contributions(scene, cam, cfg, {}, &mask);
  std::vector<size_t> out;
  for (size_t idx : candidates)
    if (weight[idx] > tau_g) out.push_back(idx);
  return out;
}

DistillResult distill(const Scene& scene, const DetectionInput& detections,
                      const std::map<std::string, Camera>& cams, double tau_g,
                      const RenderConfig& cfg) {
  // Resolve and validate every view up front.
  std::vector<const Camera*> view_cam(detections.views.size(), nullptr);
  for (size_t v = 0; v < detections.views.size(); ++v) {
    const DetectionView& view = detections.views[v];
    const auto it = cams.find(view.camera_id);
    if (it == cams.end())
      throw DomainError("distill: view references unknown camera id '" + view.camera_id + "'");
    view_cam[v] = &it->second;
    for (const auto& [label, mask] : view.masks) {
      if (label <= 0)
        throw DomainError("distill: object label " + std::to_string(label) +
                          " must be a positive integer");
      check_mask_shape(*view_cam[v], mask, "distill");
    }
  }
  for (const auto& [label, vec] : detections.features)
    if (label <= 0)
      throw DomainError("distill: feature label " + std::to_string(label) +
                        " must be a positive integer");

  // Per object: intersect containment over its views, union visibility, and
  // accumulate the blend contribution its masks collect per primitive. One
  // restricted render per (object, view) feeds both the visibility test and
  // the conflict score.
  std::map<int32_t, std::vector<size_t>> members;
  std::map<int32_t, std::vector<uint8_t>> visible;
  std::map<int32_t, std::vector<double>> contribution;
  for (size_t v = 0; v < detections.views.size(); ++v) {
    for (const auto& [label, mask] : detections.views[v].masks) {
      if (!detections.features.count(label))
        throw DomainError("distill: no feature vector for label " + std::to_string(label));
      const Camera& cam = *view_cam[v];
      const std::vector<size_t> cand = candidate_primitives(scene, cam, mask);
      auto [mit, fresh] = members.try_emplace(label, cand);
      if (!fresh) {
        std::vector<size_t> both;
        std::set_intersection(mit->second.begin(), mit->second.end(), cand.begin(), cand.end(),
                              std::back_inserter(both));
        mit->second = std::move(both);
      }
      const std::vector<double> weight = blend_contributions(scene, cam, cfg, {}, &mask);
      auto& seen = visible.try_emplace(label, scene.size(), uint8_t{0}).first->second;
      auto& acc = contribution.try_emplace(label, scene.size(), 0.0).first->second;
      for (size_t i = 0; i < scene.size(); ++i) {
        if (weight[i] > tau_g) seen[i] = 1;
        acc[i] += weight[i];
      }
    }
  }
  for (auto& [label, idxs] : members) {
    const auto& seen = visible[label];
    std::vector<size_t> kept;
    for (size_t i : idxs)
      if (seen[i]) kept.push_back(i);
    idxs = std::move(kept);
  }

  // Resolve multi-object claims by summed blend contribution.
  DistillResult result;
  result.scene = scene;
  for (auto& prim : result.scene.primitives) prim.label = 0;
  std::vector<int32_t> owner(scene.size(), 0);
  for (const auto& [label, idxs] : members) {
    for (size_t i : idxs) {
      if (owner[i] == 0) {
        owner[i] = label;
        continue;
      }
      const double held = contribution[owner[i]][i];
      const double claim = contribution[label][i];
      if (claim == held)
        throw ConflictingLabels("distill: primitive " + std::to_string(i) +
                                " claimed by labels " + std::to_string(owner[i]) + " and " +
                                std::to_string(label) + " with equal blend contribution");
      if (claim > held) owner[i] = label;
    }
  }
  for (size_t i = 0; i < scene.size(); ++i) result.scene.primitives[i].label = owner[i];

  result.table.entries = detections.features;
  result.table.canon = detections.canon;
  check_semantic_table(result.table);
  return result;
}

double relevancy(const Eigen::VectorXd& f_txt, const Eigen::VectorXd& f_obj,
                 const std::vector<Eigen::VectorXd>& canon) {
  if (canon.empty()) throw DomainError("relevancy: no canonical phrase vectors");
  if (f_txt.size() != f_obj.size())
    throw DimMismatch("relevancy: text feature dimension " + std::to_string(f_txt.size()) +
                      " vs object feature dimension " + std::to_string(f_obj.size()));
  const double t = f_txt.dot(f_obj);
  double worst_canon = -std::numeric_limits<double>::infinity();
  for (const auto& c : canon) {
    if (c.size() != f_obj.size())
      throw DimMismatch("relevancy: canon dimension " + std::to_string(c.size()) +
                        " vs object feature dimension " + std::to_string(f_obj.size()));
    worst_canon = std::max(worst_canon, c.dot(f_obj));
  }
  // min_i e^t / (e^t + e^{c_i}) = logistic(t - max_i c_i), evaluated in the
  // overflow-safe form.
  const double z = t - worst_canon;
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

QueryResult query(const Scene& scene, const SemanticTable& table, const Eigen::VectorXd& f_txt) {
  check_semantic_table(table);
  if (table.entries.empty()) throw EmptyTable("query: semantic table has no labels");
  QueryResult result;
  double best = -1.0;
  for (const auto& [label, f_obj] : table.entries) {
    const double s = relevancy(f_txt, f_obj, table.canon);
    result.scores[label] = s;
    if (s > best) {  // map iteration is ascending, so ties keep the smaller label
      best = s;
      result.label = label;
    }
  }
  for (size_t i = 0; i < scene.size(); ++i)
    if (scene.primitives[i].label == result.label) result.indices.push_back(i);
  return result;
}

}  // namespace msgfield
