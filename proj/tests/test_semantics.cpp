#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "msgfield/errors.hpp"
#include "msgfield/io.hpp"
#include "msgfield/projection.hpp"
#include "msgfield/semantics.hpp"
#include "msgfield/util.hpp"

using namespace msgfield;

namespace {

Camera sem_cam(double tx = 0.0) {
  return make_camera(48, 48, 50, 50, 23.5, 23.5, Vec4(1, 0, 0, 0), Vec3(tx, 0, 0), 0.05, 50.0);
}

// Camera on a horizontal circle of radius 2 around (0,0,2), aimed at it.
Camera sem_orbit_cam(double azim_deg) {
  const double rad = azim_deg * 3.14159265358979323846 / 180.0;
  const Mat3 r_cw = Eigen::AngleAxisd(rad, Vec3::UnitY()).toRotationMatrix();
  const Vec3 center(0, 0, 2);
  const Vec3 pos = center - 2.0 * r_cw.col(2);
  const Mat3 r_wc = r_cw.transpose();
  const Eigen::Quaterniond eq(r_wc);
  return make_camera(48, 48, 50, 50, 23.5, 23.5, Vec4(eq.w(), eq.x(), eq.y(), eq.z()),
                     -(r_wc * pos), 0.05, 50.0);
}

Mask full_mask(const Camera& cam, uint8_t value) {
  Mask m(cam.width, cam.height);
  std::fill(m.data.begin(), m.data.end(), value);
  return m;
}

// White rectangle covering the pixel box [x0,x1]x[y0,y1].
Mask rect_mask(const Camera& cam, int x0, int x1, int y0, int y1) {
  Mask m(cam.width, cam.height);
  for (int y = std::max(0, y0); y <= std::min(cam.height - 1, y1); ++y)
    for (int x = std::max(0, x0); x <= std::min(cam.width - 1, x1); ++x) m.data[y * cam.width + x] = 1;
  return m;
}

// Rectangle that covers every projected footprint box of `indices`, padded.
Mask union_footprint_mask(const Scene& scene, const Camera& cam,
                          const std::vector<size_t>& indices, int pad = 2) {
  double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
  for (size_t i : indices) {
    const ProjectedSplat ps = splat_projection(scene.primitives[i], cam);
    REQUIRE(ps.valid);
    x0 = std::min(x0, ps.p[0] - ps.h[0]);
    x1 = std::max(x1, ps.p[0] + ps.h[0]);
    y0 = std::min(y0, ps.p[1] - ps.h[1]);
    y1 = std::max(y1, ps.p[1] + ps.h[1]);
  }
  return rect_mask(cam, static_cast<int>(std::floor(x0)) - pad,
                   static_cast<int>(std::ceil(x1)) + pad, static_cast<int>(std::floor(y0)) - pad,
                   static_cast<int>(std::ceil(y1)) + pad);
}

void add_splat(Scene& scene, const Vec3& mu, double scale, double opacity, const Vec3& color,
               uint8_t dynamic = 0) {
  scene.primitives.push_back(
      make_primitive(mu, Vec4(1, 0, 0, 0), Vec2(scale, scale), opacity, color, 0));
  scene.dynamic_mask.push_back(dynamic);
}

Eigen::VectorXd unit_axis(int dim, int axis) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  v[axis] = 1.0;
  return v;
}

// Two well-separated 3-splat clusters plus assorted background primitives.
// Cluster A occupies indices 0-2, cluster B indices 3-5. Index 6 sits deep
// behind cluster A: a frontal view projects it inside A's footprint, but an
// orbited view separates the two by depth parallax. Indices 7-8 are far
// off-axis.
Scene two_cluster_scene() {
  Scene scene;
  add_splat(scene, Vec3(-0.44, 0.02, 2.0), 0.06, 0.96, Vec3(0.9, 0.2, 0.2));
  add_splat(scene, Vec3(-0.36, -0.04, 2.02), 0.06, 0.96, Vec3(0.8, 0.3, 0.2));
  add_splat(scene, Vec3(-0.40, 0.06, 1.98), 0.06, 0.96, Vec3(0.9, 0.3, 0.1));
  add_splat(scene, Vec3(0.38, -0.02, 2.0), 0.06, 0.96, Vec3(0.2, 0.3, 0.9));
  add_splat(scene, Vec3(0.44, 0.05, 2.03), 0.06, 0.96, Vec3(0.1, 0.4, 0.8));
  add_splat(scene, Vec3(0.41, -0.07, 1.97), 0.06, 0.96, Vec3(0.2, 0.2, 0.9));
  add_splat(scene, Vec3(-0.45, 0.0, 6.0), 0.04, 0.9, Vec3(0.4, 0.4, 0.4));
  add_splat(scene, Vec3(-1.6, 1.4, 4.0), 0.3, 0.9, Vec3(0.5, 0.5, 0.5));
  add_splat(scene, Vec3(1.5, -1.5, 4.2), 0.3, 0.9, Vec3(0.6, 0.5, 0.4));
  return scene;
}

}  // namespace

TEST_CASE("candidate_primitives honors mask containment") {
  const Scene scene = two_cluster_scene();
  const Camera cam = sem_cam();

  CHECK(candidate_primitives(scene, cam, full_mask(cam, 0)).empty());

  std::vector<size_t> in_frustum;
  for (size_t i = 0; i < scene.size(); ++i) {
    const ProjectedSplat ps = splat_projection(scene.primitives[i], cam);
    // The white-mask case also needs the footprint box fully inside the image.
    if (!ps.valid) continue;
    if (ps.p[0] - ps.h[0] >= -0.5 && ps.p[0] + ps.h[0] < cam.width - 0.5 &&
        ps.p[1] - ps.h[1] >= -0.5 && ps.p[1] + ps.h[1] < cam.height - 0.5)
      in_frustum.push_back(i);
  }
  CHECK(candidate_primitives(scene, cam, full_mask(cam, 1)) == in_frustum);

  // A rectangle around cluster A contains the cluster and the primitive
  // hiding deep behind it, nothing else.
  const Mask mask_a = union_footprint_mask(scene, cam, {0, 1, 2}, 3);
  CHECK(candidate_primitives(scene, cam, mask_a) == std::vector<size_t>{0, 1, 2, 6});

  Mask wrong(cam.width + 1, cam.height);
  CHECK_THROWS_AS(candidate_primitives(scene, cam, wrong), ShapeMismatch);
}

TEST_CASE("candidate_primitives excludes behind-camera primitives") {
  Scene scene;
  add_splat(scene, Vec3(0, 0, 2.0), 0.08, 0.9, Vec3(0.5, 0.5, 0.5));
  add_splat(scene, Vec3(0, 0, -2.0), 0.08, 0.9, Vec3(0.5, 0.5, 0.5));
  const Camera cam = sem_cam();
  CHECK(candidate_primitives(scene, cam, full_mask(cam, 1)) == std::vector<size_t>{0});
}

TEST_CASE("foreground_filter keeps visible contributors only") {
  // Two primitives stacked along the central ray; the front one is nearly
  // opaque there, so blending terminates before the rear one can contribute.
  Scene scene;
  add_splat(scene, Vec3(0, 0, 2.0), 0.1, 0.99999, Vec3(1, 0, 0));
  add_splat(scene, Vec3(0, 0, 2.5), 0.1, 0.9, Vec3(0, 1, 0));
  // Principal point on an exact pixel center so the single-pixel mask sits
  // exactly on the shared ray, where the front alpha is 0.99999 and the
  // remaining transmittance is below the blending floor.
  const Camera cam =
      make_camera(48, 48, 50, 50, 24.0, 24.0, Vec4(1, 0, 0, 0), Vec3(0, 0, 0), 0.05, 50.0);
  const Mask mask = rect_mask(cam, 24, 24, 24, 24);
  const std::vector<size_t> cands = {0, 1};

  CHECK(foreground_filter(scene, cam, mask, cands) == std::vector<size_t>{0});
  CHECK(foreground_filter(scene, cam, mask, {1}).empty());
  CHECK(foreground_filter(scene, cam, mask, cands,
                          std::numeric_limits<double>::infinity())
            .empty());

  // Alone, the rear primitive is fully visible.
  Scene rear_only;
  add_splat(rear_only, Vec3(0, 0, 2.5), 0.1, 0.9, Vec3(0, 1, 0));
  CHECK(foreground_filter(rear_only, cam, mask, {0}) == std::vector<size_t>{0});

  CHECK_THROWS_AS(foreground_filter(scene, cam, mask, {5}), DomainError);
}

TEST_CASE("distill labels two clusters from two views; containment must hold in every view") {
  const Scene scene = two_cluster_scene();
  const std::map<std::string, Camera> cams = {{"front", sem_orbit_cam(0.0)},
                                              {"side", sem_orbit_cam(25.0)}};

  DetectionInput det;
  for (const auto& [id, cam] : cams) {
    DetectionView view;
    view.camera_id = id;
    view.masks[1] = union_footprint_mask(scene, cam, {0, 1, 2}, 3);
    view.masks[2] = union_footprint_mask(scene, cam, {3, 4, 5}, 3);
    det.views.push_back(std::move(view));
  }
  det.features[1] = unit_axis(4, 0);
  det.features[2] = unit_axis(4, 1);
  det.features[3] = unit_axis(4, 2);  // never detected in any view
  det.canon = {unit_axis(4, 3)};

  // The deep background primitive rides inside cluster A's frontal mask but
  // parallax carries it out of the side-view mask, so the every-view rule
  // must reject it.
  {
    const auto front_cands =
        candidate_primitives(scene, cams.at("front"), det.views[0].masks.at(1));
    REQUIRE(std::count(front_cands.begin(), front_cands.end(), 6) == 1);
    const auto side_cands =
        candidate_primitives(scene, cams.at("side"), det.views[1].masks.at(1));
    REQUIRE(std::count(side_cands.begin(), side_cands.end(), 6) == 0);
  }

  const DistillResult res = distill(scene, det, cams);
  const std::vector<int32_t> expected = {1, 1, 1, 2, 2, 2, 0, 0, 0};
  for (size_t i = 0; i < scene.size(); ++i) CHECK(res.scene.primitives[i].label == expected[i]);
  // Input scene is untouched; the result carries the shared feature table.
  for (const auto& prim : scene.primitives) CHECK(prim.label == 0);
  CHECK(res.table.entries.size() == 3);
  CHECK(res.table.entries.at(1) == det.features[1]);
  CHECK(res.table.canon.size() == 1);

  // Label 3 had a feature but no mask: present in the table, no members.
  for (const auto& prim : res.scene.primitives) CHECK(prim.label != 3);
}

TEST_CASE("distill with a single view and object reduces to filtered candidates") {
  const Scene scene = two_cluster_scene();
  const Camera cam = sem_cam();
  const Mask mask = union_footprint_mask(scene, cam, {0, 1, 2}, 3);

  DetectionInput det;
  det.views.push_back({"only", {{7, mask}}});
  det.features[7] = unit_axis(3, 0);
  det.canon = {unit_axis(3, 1)};

  const DistillResult res = distill(scene, det, {{"only", cam}});
  const std::vector<size_t> direct =
      foreground_filter(scene, cam, mask, candidate_primitives(scene, cam, mask));
  std::vector<size_t> labeled;
  for (size_t i = 0; i < res.scene.size(); ++i)
    if (res.scene.primitives[i].label == 7) labeled.push_back(i);
  CHECK(labeled == direct);
  // With only the frontal view there is no parallax check, and the deep
  // primitive is inside the mask and unoccluded, so it joins the cluster.
  CHECK(labeled == std::vector<size_t>{0, 1, 2, 6});
}

TEST_CASE("distill resolves overlapping claims by summed contribution") {
  const Scene scene = two_cluster_scene();
  const Camera cam0 = sem_cam(0.0);
  const Camera cam1 = sem_cam(0.25);
  const Mask m0 = union_footprint_mask(scene, cam0, {0, 1, 2});
  const Mask m1 = union_footprint_mask(scene, cam1, {0, 1, 2});

  // Label 1 sees the cluster in both views, label 2 claims the same pixels in
  // one view only, so label 1 accumulates strictly more contribution.
  DetectionInput det;
  det.views.push_back({"a", {{1, m0}, {2, m0}}});
  det.views.push_back({"b", {{1, m1}}});
  det.features[1] = unit_axis(3, 0);
  det.features[2] = unit_axis(3, 1);
  det.canon = {unit_axis(3, 2)};
  const DistillResult res = distill(scene, det, {{"a", cam0}, {"b", cam1}});
  for (size_t i : {0, 1, 2}) CHECK(res.scene.primitives[i].label == 1);

  // Identical claims in the same views tie exactly and must be reported.
  DetectionInput tie;
  tie.views.push_back({"a", {{1, m0}, {2, m0}}});
  tie.features[1] = unit_axis(3, 0);
  tie.features[2] = unit_axis(3, 1);
  tie.canon = {unit_axis(3, 2)};
  CHECK_THROWS_AS(distill(scene, tie, {{"a", cam0}}), ConflictingLabels);
}

TEST_CASE("distill validates its inputs") {
  const Scene scene = two_cluster_scene();
  const Camera cam = sem_cam();
  const Mask mask = full_mask(cam, 1);

  DetectionInput det;
  det.views.push_back({"ghost", {{1, mask}}});
  det.features[1] = unit_axis(3, 0);
  det.canon = {unit_axis(3, 1)};
  CHECK_THROWS_AS(distill(scene, det, {{"real", cam}}), DomainError);

  DetectionInput bad_shape;
  bad_shape.views.push_back({"real", {{1, Mask(8, 8)}}});
  bad_shape.features[1] = unit_axis(3, 0);
  bad_shape.canon = {unit_axis(3, 1)};
  CHECK_THROWS_AS(distill(scene, bad_shape, {{"real", cam}}), ShapeMismatch);

  DetectionInput no_feature;
  no_feature.views.push_back({"real", {{1, mask}}});
  no_feature.canon = {unit_axis(3, 1)};
  CHECK_THROWS_AS(distill(scene, no_feature, {{"real", cam}}), DomainError);

  DetectionInput bad_label;
  bad_label.views.push_back({"real", {{0, mask}}});
  bad_label.canon = {unit_axis(3, 1)};
  CHECK_THROWS_AS(distill(scene, bad_label, {{"real", cam}}), DomainError);

  DetectionInput no_canon;
  no_canon.views.push_back({"real", {{1, mask}}});
  no_canon.features[1] = unit_axis(3, 0);
  CHECK_THROWS_AS(distill(scene, no_canon, {{"real", cam}}), DomainError);
}

TEST_CASE("relevancy is the paired softmax against the worst canonical phrase") {
  // Equal text and canon alignments sit exactly at 1/2.
  const Eigen::VectorXd obj = unit_axis(3, 0);
  CHECK(relevancy(unit_axis(3, 1), obj, {unit_axis(3, 1)}) == doctest::Approx(0.5).epsilon(1e-15));

  // Hand-evaluated: dot(txt,obj)=2 against canon dots {1, 0, -1} gives
  // e^2/(e^2+e^1).
  Eigen::VectorXd txt = Eigen::VectorXd::Zero(3);
  txt[0] = 2.0;
  const std::vector<Eigen::VectorXd> canon = {unit_axis(3, 0), unit_axis(3, 1), -unit_axis(3, 0)};
  const double expect = std::exp(2.0) / (std::exp(2.0) + std::exp(1.0));
  CHECK(relevancy(txt, obj, canon) == doctest::Approx(expect).epsilon(1e-14));

  // Adding canonical phrases can only lower the score.
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd a(4), b(4), extra(4);
    for (int i = 0; i < 4; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
      extra[i] = rng.normal();
    }
    std::vector<Eigen::VectorXd> base = {unit_axis(4, 0), unit_axis(4, 2)};
    const double s1 = relevancy(a, b, base);
    base.push_back(extra);
    CHECK(relevancy(a, b, base) <= s1 + 1e-15);
  }

  CHECK_THROWS_AS(relevancy(unit_axis(3, 0), unit_axis(4, 0), canon), DimMismatch);
  CHECK_THROWS_AS(relevancy(unit_axis(3, 0), unit_axis(3, 0), {}), DomainError);
  CHECK_THROWS_AS(relevancy(unit_axis(3, 0), unit_axis(3, 0), {unit_axis(2, 0)}), DimMismatch);

  // Extreme dots saturate smoothly (the far tail underflows to 0.0 in
  // doubles) and never overflow or go NaN.
  Eigen::VectorXd big = Eigen::VectorXd::Zero(3);
  big[0] = 1000.0;
  const double hi = relevancy(big, obj, {-unit_axis(3, 0)});
  const double lo = relevancy(-big, obj, {unit_axis(3, 0)});
  CHECK(hi > 0.999);
  CHECK(hi <= 1.0);
  CHECK(lo >= 0.0);
  CHECK(lo < 1e-100);
}

TEST_CASE("query returns the best label deterministically") {
  Scene scene = two_cluster_scene();
  for (size_t i : {0, 1, 2}) scene.primitives[i].label = 1;
  for (size_t i : {3, 4, 5}) scene.primitives[i].label = 2;

  SemanticTable table;
  table.entries[1] = unit_axis(6, 0);
  table.entries[2] = unit_axis(6, 1);
  table.entries[3] = unit_axis(6, 2);
  table.canon = {unit_axis(6, 4)};

  const QueryResult hit = query(scene, table, unit_axis(6, 1));
  CHECK(hit.label == 2);
  CHECK(hit.indices == std::vector<size_t>{3, 4, 5});
  CHECK(hit.scores.size() == 3);
  CHECK(hit.scores.at(2) > hit.scores.at(1));
  CHECK(hit.scores.at(2) > hit.scores.at(3));

  // A single-entry table wins regardless of how badly it scores.
  SemanticTable lone;
  lone.entries[9] = unit_axis(6, 5);
  lone.canon = {unit_axis(6, 0)};
  CHECK(query(scene, lone, unit_axis(6, 1)).label == 9);
  CHECK(query(scene, lone, unit_axis(6, 1)).indices.empty());

  // Identical feature vectors tie; the smaller label wins.
  SemanticTable dup;
  dup.entries[4] = unit_axis(6, 3);
  dup.entries[8] = unit_axis(6, 3);
  dup.canon = {unit_axis(6, 0)};
  CHECK(query(scene, dup, unit_axis(6, 3)).label == 4);

  SemanticTable empty;
  empty.canon = {unit_axis(6, 0)};
  CHECK_THROWS_AS(query(scene, empty, unit_axis(6, 0)), EmptyTable);
}

TEST_CASE("check_semantic_table enforces shape and normalization") {
  SemanticTable ok;
  ok.entries[1] = unit_axis(4, 0);
  ok.canon = {unit_axis(4, 1)};
  CHECK_NOTHROW(check_semantic_table(ok));

  SemanticTable no_canon;
  no_canon.entries[1] = unit_axis(4, 0);
  CHECK_THROWS_AS(check_semantic_table(no_canon), DomainError);

  SemanticTable ragged = ok;
  ragged.entries[2] = unit_axis(5, 0);
  CHECK_THROWS_AS(check_semantic_table(ragged), DimMismatch);

  SemanticTable denorm = ok;
  denorm.entries[2] = 1.5 * unit_axis(4, 2);
  CHECK_THROWS_AS(check_semantic_table(denorm), DomainError);

  SemanticTable bad_canon = ok;
  bad_canon.canon.push_back(unit_axis(3, 0));
  CHECK_THROWS_AS(check_semantic_table(bad_canon), DimMismatch);
}

TEST_CASE("detection manifests load masks and features") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "msgfield_det_test";
  fs::create_directories(dir / "masks");

  const Camera cam = sem_cam();
  save_mask(rect_mask(cam, 4, 10, 4, 10), (dir / "masks" / "a1.pgm").string());
  save_mask(rect_mask(cam, 20, 30, 20, 30), (dir / "masks" / "b1.pgm").string());
  save_mask(rect_mask(cam, 5, 11, 4, 10), (dir / "masks" / "a2.pgm").string());

  FeatureFile ff;
  ff.dim = 4;
  ff.canon = {unit_axis(4, 3)};
  ff.objects[1] = unit_axis(4, 0);
  ff.objects[2] = unit_axis(4, 1);
  save_features(ff, (dir / "features.json").string());

  {
    std::ofstream out(dir / "detections.json");
    out << R"({
  "features": "features.json",
  "views": [
    {"camera": "left", "masks": {"1": "masks/a1.pgm", "2": "masks/b1.pgm"}},
    {"camera": "right", "masks": {"1": "masks/a2.pgm"}}
  ]
})";
  }

  const DetectionInput det = load_detections((dir / "detections.json").string());
  CHECK(det.views.size() == 2);
  CHECK(det.views[0].camera_id == "left");
  CHECK(det.views[0].masks.size() == 2);
  CHECK(det.views[1].masks.size() == 1);
  CHECK(det.views[1].masks.count(1) == 1);
  CHECK(det.features.size() == 2);
  CHECK(det.canon.size() == 1);
  CHECK(det.views[0].masks.at(1).data[4 * cam.width + 4] == 1);
  CHECK(det.views[0].masks.at(1).data[0] == 0);

  {
    std::ofstream out(dir / "bad_label.json");
    out << R"({"features": "features.json",
               "views": [{"camera": "c", "masks": {"zero": "masks/a1.pgm"}}]})";
  }
  CHECK_THROWS_AS(load_detections((dir / "bad_label.json").string()), ParseError);

  {
    std::ofstream out(dir / "missing_mask.json");
    out << R"({"features": "features.json",
               "views": [{"camera": "c", "masks": {"1": "masks/nope.pgm"}}]})";
  }
  CHECK_THROWS_AS(load_detections((dir / "missing_mask.json").string()), IoError);

  fs::remove_all(dir);
}
