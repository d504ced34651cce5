#include "msgfield/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "msgfield/config.hpp"
#include "msgfield/errors.hpp"
#include "msgfield/io.hpp"
#include "msgfield/pipeline.hpp"
#include "msgfield/projection.hpp"

namespace msgfield {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Typed config access. Sections are optional; unknown keys are rejected so
// typos fail loudly instead of silently keeping defaults.

const json* section(const json& root, const char* name) {
  if (!root.contains(name)) return nullptr;
  const json& sec = root.at(name);
  if (!sec.is_object()) throw ParseError(std::string("config section '") + name +
                                         "' must be a table");
  return &sec;
}

void check_keys(const json& sec, const char* name, const std::set<std::string>& allowed) {
  for (auto it = sec.begin(); it != sec.end(); ++it)
    if (!allowed.count(it.key()))
      throw ParseError("unknown key '" + it.key() + "' in config section '" + name + "'");
}

double get_num(const json& sec, const char* key, double fallback) {
  if (!sec.contains(key)) return fallback;
  const json& v = sec.at(key);
  if (!v.is_number()) throw ParseError(std::string("'") + key + "' must be a number");
  return v.get<double>();
}

int64_t get_int(const json& sec, const char* key, int64_t fallback) {
  if (!sec.contains(key)) return fallback;
  const json& v = sec.at(key);
  if (!v.is_number_integer()) throw ParseError(std::string("'") + key + "' must be an integer");
  return v.get<int64_t>();
}

std::string get_str(const json& sec, const char* key, const std::string& fallback) {
  if (!sec.contains(key)) return fallback;
  const json& v = sec.at(key);
  if (!v.is_string()) throw ParseError(std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

Vec3 get_vec3(const json& sec, const char* key, const Vec3& fallback) {
  if (!sec.contains(key)) return fallback;
  const json& v = sec.at(key);
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() ||
      !v[2].is_number())
    throw ParseError(std::string("'") + key + "' must be an array of 3 numbers");
  return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
}

std::vector<double> get_num_array(const json& sec, const char* key,
                                  const std::vector<double>& fallback) {
  if (!sec.contains(key)) return fallback;
  const json& v = sec.at(key);
  if (!v.is_array()) throw ParseError(std::string("'") + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ParseError(std::string("'") + key + "' must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Section -> struct appliers (defaults come from the structs themselves).

void apply_render_config(const json& root, RenderConfig& rc) {
  const json* sec = section(root, "render");
  if (!sec) return;
  check_keys(*sec, "render",
             {"alpha_cutoff", "gauss_cutoff", "transmittance_floor", "tile_size", "background"});
  rc.alpha_cutoff = get_num(*sec, "alpha_cutoff", rc.alpha_cutoff);
  rc.gauss_cutoff = get_num(*sec, "gauss_cutoff", rc.gauss_cutoff);
  rc.transmittance_floor = get_num(*sec, "transmittance_floor", rc.transmittance_floor);
  rc.tile_size = static_cast<int>(get_int(*sec, "tile_size", rc.tile_size));
  rc.background = get_vec3(*sec, "background", rc.background);
}

void apply_fit_config(const json& root, FitConfig& fc) {
  const json* sec = section(root, "fit");
  if (sec) {
    check_keys(*sec, "fit",
               {"iterations", "lr_translation", "lr_quaternion", "lr_coeffs", "stride",
                "rigidity_k", "lambda_ssim", "lambda_dice", "lambda_rigidity"});
    fc.iterations = static_cast<int>(get_int(*sec, "iterations", fc.iterations));
    fc.lr_translation = get_num(*sec, "lr_translation", fc.lr_translation);
    fc.lr_quaternion = get_num(*sec, "lr_quaternion", fc.lr_quaternion);
    fc.lr_coeffs = get_num(*sec, "lr_coeffs", fc.lr_coeffs);
    fc.stride = static_cast<int>(get_int(*sec, "stride", fc.stride));
    fc.rigidity_k = static_cast<int>(get_int(*sec, "rigidity_k", fc.rigidity_k));
    fc.weights.lambda_ssim = get_num(*sec, "lambda_ssim", fc.weights.lambda_ssim);
    fc.weights.lambda_dice = get_num(*sec, "lambda_dice", fc.weights.lambda_dice);
    fc.weights.lambda_rigidity = get_num(*sec, "lambda_rigidity", fc.weights.lambda_rigidity);
  }
  apply_render_config(root, fc.render);
}

ObjectSpec parse_object_spec(const json& sec) {
  check_keys(sec, "objects",
             {"shape", "count", "center", "extent", "color", "label", "motion", "translation",
              "rotation_axis", "rotation_deg", "hinge_deg"});
  ObjectSpec obj;
  const std::string shape = get_str(sec, "shape", "box");
  if (shape == "box") obj.shape = ClusterShape::kBox;
  else if (shape == "sphere") obj.shape = ClusterShape::kSphereShell;
  else if (shape == "hinge") obj.shape = ClusterShape::kHinge;
  else throw ParseError("unknown object shape '" + shape + "'");
  obj.primitive_count = static_cast<int>(get_int(sec, "count", obj.primitive_count));
  obj.center = get_vec3(sec, "center", obj.center);
  obj.extent = get_num(sec, "extent", obj.extent);
  obj.color = get_vec3(sec, "color", obj.color);
  obj.label = static_cast<int32_t>(get_int(sec, "label", obj.label));

  const std::string motion = get_str(sec, "motion", "static");
  if (motion == "static") obj.motion.kind = MotionProgram::Kind::kStatic;
  else if (motion == "rigid") obj.motion.kind = MotionProgram::Kind::kRigid;
  else if (motion == "hinge") obj.motion.kind = MotionProgram::Kind::kHinge;
  else throw ParseError("unknown motion kind '" + motion + "'");
  obj.motion.translation_per_frame = get_vec3(sec, "translation", Vec3::Zero());
  obj.motion.rotation_axis = get_vec3(sec, "rotation_axis", obj.motion.rotation_axis);
  obj.motion.rotation_deg_per_frame = get_num(sec, "rotation_deg", 0.0);
  obj.motion.hinge_deg_per_frame = get_num(sec, "hinge_deg", 0.0);
  return obj;
}

SynthSpec parse_synth_spec(const json& root) {
  SynthSpec spec;
  if (const json* sec = section(root, "synth")) {
    check_keys(*sec, "synth", {"seed", "background_count", "frame_count"});
    spec.seed = static_cast<uint64_t>(get_int(*sec, "seed", static_cast<int64_t>(spec.seed)));
    spec.background_count =
        static_cast<int>(get_int(*sec, "background_count", spec.background_count));
    spec.frame_count = static_cast<int>(get_int(*sec, "frame_count", spec.frame_count));
  }
  if (const json* sec = section(root, "rig")) {
    check_keys(*sec, "rig",
               {"width", "height", "fx", "fy", "center", "radius", "azimuth_deg", "near_z",
                "far_z"});
    spec.rig.width = static_cast<int>(get_int(*sec, "width", spec.rig.width));
    spec.rig.height = static_cast<int>(get_int(*sec, "height", spec.rig.height));
    spec.rig.fx = get_num(*sec, "fx", spec.rig.fx);
    spec.rig.fy = get_num(*sec, "fy", spec.rig.fy);
    spec.rig.center = get_vec3(*sec, "center", spec.rig.center);
    spec.rig.radius = get_num(*sec, "radius", spec.rig.radius);
    spec.rig.azimuth_deg = get_num_array(*sec, "azimuth_deg", spec.rig.azimuth_deg);
    spec.rig.near_z = get_num(*sec, "near_z", spec.rig.near_z);
    spec.rig.far_z = get_num(*sec, "far_z", spec.rig.far_z);
  }
  if (root.contains("objects")) {
    const json& arr = root.at("objects");
    if (!arr.is_array()) throw ParseError("'objects' must be an array of tables");
    spec.objects.clear();
    for (const auto& sec : arr) {
      if (!sec.is_object()) throw ParseError("'objects' entries must be tables");
      spec.objects.push_back(parse_object_spec(sec));
    }
  }
  apply_render_config(root, spec.render);
  return spec;
}

// ---------------------------------------------------------------------------
// Shared command plumbing.

json load_config_or_empty(const std::string& path) {
  if (path.empty()) return json::object();
  return load_config_file(path);
}

std::map<std::string, Camera> camera_map(const std::vector<CameraRecord>& records) {
  std::map<std::string, Camera> cams;
  for (const auto& rec : records) cams[rec.id] = rec.cam;
  return cams;
}

SemanticTable table_from_features(const FeatureFile& f) {
  SemanticTable table;
  table.entries = f.objects;
  table.canon = f.canon;
  return table;
}

FeatureFile features_from_table(const SemanticTable& table) {
  FeatureFile f;
  f.dim = table.canon.empty() ? 0 : static_cast<int>(table.canon.front().size());
  f.canon = table.canon;
  f.objects = table.entries;
  return f;
}

// The single query vector carried by a feature file (canon is ignored).
Eigen::VectorXd load_text_feature(const std::string& path) {
  const FeatureFile f = load_features(path);
  if (f.objects.size() != 1)
    throw ParseError("text feature file must carry exactly one object vector, got " +
                     std::to_string(f.objects.size()));
  return f.objects.begin()->second;
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << body;
  if (!out) throw IoError("write failed for '" + path + "'");
}

void emit_result(const json& j, const std::string& out_path) {
  if (out_path.empty())
    std::cout << j.dump() << "\n";
  else
    write_text_file(out_path, j.dump() + "\n");
}

// "3,7,10-14" -> sorted unique indices.
std::vector<size_t> parse_index_list(const std::string& text) {
  std::set<size_t> out;
  std::istringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (tok.empty()) throw ParseError("empty entry in index list '" + text + "'");
    const size_t dash = tok.find('-');
    try {
      if (dash == std::string::npos) {
        out.insert(std::stoul(tok));
      } else {
        const size_t lo = std::stoul(tok.substr(0, dash));
        const size_t hi = std::stoul(tok.substr(dash + 1));
        if (hi < lo) throw ParseError("backwards range '" + tok + "'");
        for (size_t i = lo; i <= hi; ++i) out.insert(i);
      }
    } catch (const std::invalid_argument&) {
      throw ParseError("bad index '" + tok + "'");
    } catch (const std::out_of_range&) {
      throw ParseError("index out of range '" + tok + "'");
    }
  }
  return {out.begin(), out.end()};
}

std::string frame_dir_name(size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "f%03zu", k);
  return buf;
}

// ---------------------------------------------------------------------------
// render

struct RenderOpts {
  std::string scene, cameras, out, channels = "color,opacity", config;
  bool naive = false;
};

int cmd_render(const RenderOpts& o) {
  const Scene scene = load_scene(o.scene);
  const auto records = load_camera_set(o.cameras);
  RenderConfig rc;
  apply_render_config(load_config_or_empty(o.config), rc);

  RenderChannels ch{false, false, false, false};
  std::istringstream in(o.channels);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (tok == "color") ch.color = true;
    else if (tok == "opacity") ch.opacity = true;
    else if (tok == "depth") ch.depth = true;
    else if (tok == "label") ch.label = true;
    else throw ParseError("unknown channel '" + tok + "'");
  }

  fs::create_directories(o.out);
  for (const auto& rec : records) {
    const RenderTarget target = o.naive ? render_naive(scene, rec.cam, ch, rc)
                                        : render(scene, rec.cam, ch, rc);
    const std::string base = (fs::path(o.out) / rec.id).string();
    if (ch.color) save_ppm(target.color, base + "_color.ppm");
    if (ch.opacity) save_gray(target.opacity, base + "_opacity.pgm");
    if (ch.depth) {
      GrayImage scaled = target.depth;
      for (double& v : scaled.data) v /= rec.cam.far_z;  // unit range for the 8-bit format
      save_gray(scaled, base + "_depth.pgm");
    }
    if (ch.label) save_label_image(target.label, base + "_label.pgm");
  }
  std::cout << json{{"cameras", records.size()}, {"out", o.out}}.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// distill

struct DistillOpts {
  std::string scene, detections, cameras, out_scene, out_table, config;
  double tau = 1e-4;
};

int cmd_distill(const DistillOpts& o) {
  const Scene scene = load_scene(o.scene);
  const DetectionInput det = load_detections(o.detections);
  RenderConfig rc;
  apply_render_config(load_config_or_empty(o.config), rc);

  if (det.views.empty()) {
    std::cerr << "warning: detection manifest has no views; labels left unchanged\n";
    save_scene(scene, o.out_scene);
    SemanticTable table;
    table.entries = det.features;
    table.canon = det.canon;
    check_semantic_table(table);
    save_features(features_from_table(table), o.out_table);
    std::cout << json{{"labeled", 0}, {"labels", 0}}.dump() << "\n";
    return 0;
  }

  const auto cams = camera_map(load_camera_set(o.cameras));
  const DistillResult result = distill(scene, det, cams, o.tau, rc);
  save_scene(result.scene, o.out_scene);
  save_features(features_from_table(result.table), o.out_table);

  size_t labeled = 0;
  for (const auto& p : result.scene.primitives) labeled += p.label != 0;
  std::cout << json{{"labeled", labeled}, {"labels", result.table.entries.size()}}.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// query

struct QueryOpts {
  std::string scene, table, text_feature, out;
};

int cmd_query(const QueryOpts& o) {
  const Scene scene = load_scene(o.scene);
  const SemanticTable table = table_from_features(load_features(o.table));
  const Eigen::VectorXd text = load_text_feature(o.text_feature);
  const QueryResult qr = query(scene, table, text);

  json scores = json::object();
  for (const auto& [label, score] : qr.scores) scores[std::to_string(label)] = score;
  emit_result({{"label", qr.label}, {"indices", qr.indices}, {"scores", scores}}, o.out);
  return 0;
}

// ---------------------------------------------------------------------------
// track

struct TrackOpts {
  std::string scene, frames, cameras, mode = "rigid", indices, out, config;
  int32_t label = 0;       // semantic-query selection of the dynamic set
  int32_t mask_label = 0;  // mask stream; defaults to --label
  int bases = 10;
};

int cmd_track(const TrackOpts& o) {
  Scene scene = load_scene(o.scene);
  const auto records = load_camera_set(o.cameras);
  std::vector<Camera> cams;
  for (const auto& rec : records) cams.push_back(rec.cam);

  MotionMode mode;
  if (o.mode == "rigid") mode = MotionMode::kRigid;
  else if (o.mode == "nonrigid") mode = MotionMode::kNonrigid;
  else throw ParseError("unknown mode '" + o.mode + "' (rigid|nonrigid)");

  FitConfig fc;
  apply_fit_config(load_config_or_empty(o.config), fc);

  // Dynamic set: a label in the scene or an explicit index list.
  std::vector<size_t> dynamic;
  if (!o.indices.empty()) {
    dynamic = parse_index_list(o.indices);
    for (size_t i : dynamic)
      if (i >= scene.size())
        throw DomainError("dynamic index " + std::to_string(i) + " out of range");
    if (o.mask_label == 0) throw ParseError("--indices requires --mask-label");
  } else {
    if (o.label == 0) throw ParseError("one of --label or --indices is required");
    for (size_t i = 0; i < scene.size(); ++i)
      if (scene.primitives[i].label == o.label) dynamic.push_back(i);
    if (dynamic.empty())
      throw EmptyObject("label " + std::to_string(o.label) + " has no primitives");
  }
  const int32_t mask_label = o.mask_label != 0 ? o.mask_label : o.label;
  std::fill(scene.dynamic_mask.begin(), scene.dynamic_mask.end(), 0);
  for (size_t i : dynamic) scene.dynamic_mask[i] = 1;

  // Contiguous frame directories f000, f001, ...
  size_t n_frames = 0;
  while (fs::is_directory(fs::path(o.frames) / frame_dir_name(n_frames))) ++n_frames;
  if (n_frames < 2)
    throw IoError("need at least 2 frame directories under '" + o.frames + "' (f000, f001, ...)");

  const std::vector<int> timesteps = sample_frames(static_cast<int>(n_frames), fc.stride);
  ObservationSet obs;
  for (int t : timesteps) {
    const fs::path dir = fs::path(o.frames) / frame_dir_name(static_cast<size_t>(t));
    std::vector<FrameObservation> views;
    for (const auto& rec : records) {
      FrameObservation ob;
      ob.rgb = load_ppm((dir / (rec.id + ".ppm")).string());
      ob.mask =
          load_mask((dir / (rec.id + "_mask_l" + std::to_string(mask_label) + ".pgm")).string());
      views.push_back(std::move(ob));
    }
    obs[t] = std::move(views);
  }

  const int bases = mode == MotionMode::kRigid ? 1 : o.bases;
  const MotionField init = make_motion_field(mode, bases, timesteps, dynamic.size());
  const FitResult fr = fit(scene, init, cams, obs, fc);
  if (!o.out.empty()) save_trajectory(fr.field, fr.frame_loss, o.out);

  std::cout << json{{"timesteps", timesteps.size()},
                    {"dynamic", dynamic.size()},
                    {"final_loss", fr.frame_loss.back()}}
                   .dump()
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// occlusion

struct OcclusionOpts {
  std::string scene, cameras, out;
  int32_t label = 0;
  double pad = 0.02;
};

int cmd_occlusion(const OcclusionOpts& o) {
  const Scene scene = load_scene(o.scene);
  const auto records = load_camera_set(o.cameras);
  std::vector<Camera> cams;
  for (const auto& rec : records) cams.push_back(rec.cam);

  json views = json::array();
  for (const auto& rec : records) {
    const std::vector<size_t> occ = occluding_primitives(scene, o.label, rec.cam, o.pad);
    views.push_back({{"camera", rec.id}, {"occluders", occ}});
  }
  const std::vector<size_t> order = select_views(scene, o.label, cams, o.pad);
  json order_ids = json::array();
  for (size_t i : order) order_ids.push_back(records[i].id);

  emit_result({{"label", o.label}, {"views", views}, {"view_order", order_ids}}, o.out);
  return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOpts {
  std::string config, out;
};

int cmd_synth(const SynthOpts& o) {
  const SynthSpec spec = parse_synth_spec(load_config_file(o.config));
  const SynthResult res = generate(spec);

  fs::create_directories(fs::path(o.out) / "frames");
  save_scene(res.scene, (fs::path(o.out) / "scene.msgf").string());

  std::vector<CameraRecord> records;
  for (size_t v = 0; v < res.cams.size(); ++v)
    records.push_back({"cam" + std::to_string(v), res.cams[v]});
  save_camera_set(records, (fs::path(o.out) / "cameras.json").string());

  FeatureFile features;
  features.dim = res.canon_features.empty() ? 0 : static_cast<int>(res.canon_features[0].size());
  features.canon = res.canon_features;
  features.objects = res.object_features;
  save_features(features, (fs::path(o.out) / "features.json").string());

  for (size_t k = 0; k < res.frames.size(); ++k) {
    const fs::path dir = fs::path(o.out) / "frames" / frame_dir_name(k);
    fs::create_directories(dir);
    for (size_t v = 0; v < records.size(); ++v) {
      save_ppm(res.frames[k].rgb[v], (dir / (records[v].id + ".ppm")).string());
      for (const auto& [label, masks] : res.frames[k].masks)
        save_mask(masks[v],
                  (dir / (records[v].id + "_mask_l" + std::to_string(label) + ".pgm")).string());
    }
  }

  // Detection inputs: footprint-covering masks plus a manifest whose paths
  // are relative to the manifest location.
  fs::create_directories(fs::path(o.out) / "detect");
  json det_views = json::array();
  for (size_t v = 0; v < records.size(); ++v) {
    json masks = json::object();
    for (const auto& [label, dmasks] : res.detection_masks) {
      const std::string rel = "detect/" + records[v].id + "_l" + std::to_string(label) + ".pgm";
      save_mask(dmasks[v], (fs::path(o.out) / rel).string());
      masks[std::to_string(label)] = rel;
    }
    det_views.push_back({{"camera", records[v].id}, {"masks", masks}});
  }
  write_text_file((fs::path(o.out) / "detections.json").string(),
                  json{{"features", "features.json"}, {"views", det_views}}.dump(2) + "\n");

  // Ground truth for benchmarking trackers against the dataset.
  json objects = json::object();
  for (const auto& [label, range] : res.object_range) {
    json entry = {{"range", {range.first, range.second}}};
    if (res.object_se3.count(label)) {
      entry["kind"] = "rigid";
      json mats = json::array();
      for (const Mat4& m : res.object_se3.at(label)) {
        json flat = json::array();
        for (int r = 0; r < 4; ++r)
          for (int c = 0; c < 4; ++c) flat.push_back(m(r, c));
        mats.push_back(flat);
      }
      entry["se3"] = mats;
    } else if (res.hinge_deg.count(label)) {
      entry["kind"] = "hinge";
      entry["hinge_deg"] = res.hinge_deg.at(label);
      entry["moving"] = res.hinge_moving.at(label);
    } else {
      entry["kind"] = "static";
    }
    objects[std::to_string(label)] = entry;
  }
  write_text_file((fs::path(o.out) / "gt.json").string(),
                  json{{"frame_count", res.frames.size()}, {"objects", objects}}.dump(2) + "\n");

  std::cout << json{{"out", o.out},
                    {"frames", res.frames.size()},
                    {"primitives", res.scene.size()}}
                   .dump()
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// manipulate

struct ManipulateOpts {
  std::string config, text_feature, log;
};

int cmd_manipulate(const ManipulateOpts& o) {
  const json root = load_config_file(o.config);
  const SynthSpec spec = parse_synth_spec(root);
  SynthResult truth = generate(spec);

  ManipulateConfig mc;
  apply_fit_config(root, mc.fit);
  int32_t query_label = spec.objects.empty() ? 1 : spec.objects.front().label;
  size_t motion_start_tick = 1;
  Vec3 home(0, -0.8, 0.8);
  if (const json* sec = section(root, "manipulate")) {
    check_keys(*sec, "manipulate",
               {"operation", "query_label", "motion_start_tick", "eps_p", "step_length", "tau_m",
                "max_ticks", "home"});
    mc.operation = get_str(*sec, "operation", mc.operation);
    mc.eps_p = get_num(*sec, "eps_p", mc.eps_p);
    mc.step_length = get_num(*sec, "step_length", mc.step_length);
    mc.tau_m = get_num(*sec, "tau_m", mc.tau_m);
    mc.max_ticks = static_cast<int>(get_int(*sec, "max_ticks", mc.max_ticks));
    query_label = static_cast<int32_t>(get_int(*sec, "query_label", query_label));
    motion_start_tick =
        static_cast<size_t>(get_int(*sec, "motion_start_tick", (int64_t)motion_start_tick));
    home = get_vec3(*sec, "home", home);
  }

  CentroidGraspProvider provider;
  if (const json* sec = section(root, "grasp")) {
    check_keys(*sec, "grasp",
               {"arm_axis", "max_misalign_deg", "occlusion_pad", "overhead_distance"});
    provider.arm_axis = get_vec3(*sec, "arm_axis", provider.arm_axis);
    provider.max_misalign_deg = get_num(*sec, "max_misalign_deg", provider.max_misalign_deg);
    provider.occlusion_pad = get_num(*sec, "occlusion_pad", provider.occlusion_pad);
    provider.overhead_distance = get_num(*sec, "overhead_distance", provider.overhead_distance);
  }

  SemanticTable table;
  table.entries = truth.object_features;
  table.canon = truth.canon_features;

  Eigen::VectorXd text;
  if (!o.text_feature.empty()) {
    text = load_text_feature(o.text_feature);
  } else {
    if (!truth.object_features.count(query_label))
      throw DomainError("query_label " + std::to_string(query_label) +
                        " is not a generated object");
    text = truth.object_features.at(query_label);
  }

  SimWorld world = make_world(std::move(truth), motion_start_tick);
  world.home = home;
  const ManipulateResult res = manipulate(world, table, text, provider, mc);

  std::string body;
  for (const auto& line : res.log) body += line + "\n";
  if (o.log.empty())
    std::cout << body;
  else
    write_text_file(o.log, body);

  switch (res.status) {
    case ManipulateStatus::kSuccess: return 0;
    case ManipulateStatus::kFailure: return 1;
    case ManipulateStatus::kNotImplemented: return 3;
  }
  return 3;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"2D Gaussian splat scene engine: rendering, labeling, tracking, manipulation"};
  app.require_subcommand(1);

  RenderOpts render_opts;
  CLI::App* render_cmd = app.add_subcommand("render", "Render scene channels to image files");
  render_cmd->add_option("--scene", render_opts.scene, "Scene file (.msgf)")->required();
  render_cmd->add_option("--cameras", render_opts.cameras, "Camera set (.json)")->required();
  render_cmd->add_option("--out", render_opts.out, "Output directory")->required();
  render_cmd->add_option("--channels", render_opts.channels,
                         "Comma list: color,opacity,depth,label");
  render_cmd->add_flag("--naive", render_opts.naive, "Use the reference renderer");
  render_cmd->add_option("--config", render_opts.config, "Config file ([render] section)");

  DistillOpts distill_opts;
  CLI::App* distill_cmd =
      app.add_subcommand("distill", "Label primitives from masks and build the feature table");
  distill_cmd->add_option("--scene", distill_opts.scene, "Scene file (.msgf)")->required();
  distill_cmd->add_option("--detections", distill_opts.detections, "Detection manifest (.json)")
      ->required();
  distill_cmd->add_option("--cameras", distill_opts.cameras, "Camera set (.json)");
  distill_cmd->add_option("--out-scene", distill_opts.out_scene, "Labeled scene output")
      ->required();
  distill_cmd->add_option("--out-table", distill_opts.out_table, "Feature table output")
      ->required();
  distill_cmd->add_option("--tau", distill_opts.tau, "Visibility threshold");
  distill_cmd->add_option("--config", distill_opts.config, "Config file ([render] section)");

  QueryOpts query_opts;
  CLI::App* query_cmd =
      app.add_subcommand("query", "Resolve a text feature to an object's primitives");
  query_cmd->add_option("--scene", query_opts.scene, "Scene file (.msgf)")->required();
  query_cmd->add_option("--table", query_opts.table, "Feature table (.json)")->required();
  query_cmd->add_option("--text-feature", query_opts.text_feature,
                        "Feature file with one object vector")
      ->required();
  query_cmd->add_option("--out", query_opts.out, "Output JSON (default stdout)");

  TrackOpts track_opts;
  CLI::App* track_cmd = app.add_subcommand("track", "Fit object motion over a frame sequence");
  track_cmd->add_option("--scene", track_opts.scene, "Scene file (.msgf)")->required();
  track_cmd->add_option("--frames", track_opts.frames, "Frames directory (f000, f001, ...)")
      ->required();
  track_cmd->add_option("--cameras", track_opts.cameras, "Camera set (.json)")->required();
  track_cmd->add_option("--mode", track_opts.mode, "rigid|nonrigid");
  track_cmd->add_option("--label", track_opts.label, "Dynamic set = primitives with this label");
  track_cmd->add_option("--indices", track_opts.indices, "Dynamic set as list, e.g. 0-9,12");
  track_cmd->add_option("--mask-label", track_opts.mask_label,
                        "Mask stream label (defaults to --label)");
  track_cmd->add_option("--bases", track_opts.bases, "Motion basis count (nonrigid)");
  track_cmd->add_option("--out", track_opts.out, "Trajectory output (.msgt)");
  track_cmd->add_option("--config", track_opts.config, "Config file ([fit]/[render] sections)");

  OcclusionOpts occlusion_opts;
  CLI::App* occlusion_cmd =
      app.add_subcommand("occlusion", "List occluders of an object per view and rank views");
  occlusion_cmd->add_option("--scene", occlusion_opts.scene, "Scene file (.msgf)")->required();
  occlusion_cmd->add_option("--cameras", occlusion_opts.cameras, "Camera set (.json)")
      ->required();
  occlusion_cmd->add_option("--label", occlusion_opts.label, "Object label")->required();
  occlusion_cmd->add_option("--pad", occlusion_opts.pad, "Footprint padding");
  occlusion_cmd->add_option("--out", occlusion_opts.out, "Output JSON (default stdout)");

  SynthOpts synth_opts;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset directory");
  synth_cmd->add_option("--config", synth_opts.config, "Dataset spec ([synth]/[rig]/[[objects]])")
      ->required();
  synth_cmd->add_option("--out", synth_opts.out, "Dataset output directory")->required();

  ManipulateOpts manipulate_opts;
  CLI::App* manipulate_cmd =
      app.add_subcommand("manipulate", "Run the language-conditioned pick/place loop");
  manipulate_cmd->add_option("--config", manipulate_opts.config, "World + loop config")
      ->required();
  manipulate_cmd->add_option("--text-feature", manipulate_opts.text_feature,
                             "Query feature file (default: the configured object's own feature)");
  manipulate_cmd->add_option("--log", manipulate_opts.log, "Event log output (default stdout)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (render_cmd->parsed()) return cmd_render(render_opts);
    if (distill_cmd->parsed()) return cmd_distill(distill_opts);
    if (query_cmd->parsed()) return cmd_query(query_opts);
    if (track_cmd->parsed()) return cmd_track(track_opts);
    if (occlusion_cmd->parsed()) return cmd_occlusion(occlusion_opts);
    if (synth_cmd->parsed()) return cmd_synth(synth_opts);
    if (manipulate_cmd->parsed()) return cmd_manipulate(manipulate_opts);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const MsgFieldError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace msgfield
