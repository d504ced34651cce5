#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msgfield/image.hpp"
#include "msgfield/rasterizer.hpp"
#include "msgfield/scene.hpp"

namespace msgfield {

// Label -> object feature vector map plus the canonical-phrase vectors that
// every query is contrasted against. All vectors share one dimension and are
// unit norm (see check_semantic_table).
struct SemanticTable {
  std::map<int32_t, Eigen::VectorXd> entries;
  std::vector<Eigen::VectorXd> canon;
};

// Throws DomainError/DimMismatch unless canon is non-empty, all vectors share
// one dimension, and every vector is unit-norm within 1e-5.
void check_semantic_table(const SemanticTable& table);

// Binary masks one detector/segmenter run produced for one view, keyed by
// object label.
struct DetectionView {
  std::string camera_id;
  std::map<int32_t, Mask> masks;
};

// Everything distill consumes: per-view masks plus one feature vector per
// object label and the shared canonical-phrase vectors.
struct DetectionInput {
  std::vector<DetectionView> views;
  std::map<int32_t, Eigen::VectorXd> features;
  std::vector<Eigen::VectorXd> canon;
};

// Indices (ascending) of primitives whose projection is usable and whose
// footprint box lies entirely on mask foreground.
std::vector<size_t> candidate_primitives(const Scene& scene, const Camera& cam, const Mask& mask);

// Keeps the candidates that visibly contribute to the mask's foreground
// pixels: per-primitive blend weight summed over those pixels must exceed
// tau_g, so candidates hidden behind opaque front splats drop out.
std::vector<size_t> foreground_filter(const Scene& scene, const Camera& cam, const Mask& mask,
                                      const std::vector<size_t>& candidates, double tau_g = 1e-4,
                                      const RenderConfig& cfg = {});

struct DistillResult {
  Scene scene;          // relabeled copy of the input scene
  SemanticTable table;  // label -> shared object feature
};

// Assigns object labels to primitives from multi-view masks: a primitive
// joins an object when its footprint is inside the object's mask in every
// view that has one AND it visibly contributes to the mask foreground in at
// least one view. A primitive claimed by several objects goes to the one
// with the larger blend contribution summed over its masks; an exact tie
// throws ConflictingLabels. All other primitives get label 0.
DistillResult distill(const Scene& scene, const DetectionInput& detections,
                      const std::map<std::string, Camera>& cams, double tau_g = 1e-4,
                      const RenderConfig& cfg = {});

// Paired-softmax similarity of a text feature against an object feature,
// contrasted with each canonical phrase; returns the minimum over phrases,
// strictly inside (0, 1).
double relevancy(const Eigen::VectorXd& f_txt, const Eigen::VectorXd& f_obj,
                 const std::vector<Eigen::VectorXd>& canon);

struct QueryResult {
  int32_t label = 0;
  std::vector<size_t> indices;       // primitives carrying the winning label
  std::map<int32_t, double> scores;  // relevancy per table entry
};

// Scores every table entry against the text feature and returns the best
// label's primitive set; ties go to the smallest label.
QueryResult query(const Scene& scene, const SemanticTable& table, const Eigen::VectorXd& f_txt);

}  // namespace msgfield
