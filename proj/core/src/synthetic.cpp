#include "tsn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <tuple>

#include "tsn/error.hpp"
#include "tsn/parallel.hpp"
#include "tsn/split.hpp"
#include "tsn/tensor_io.hpp"

namespace tsn {
namespace {

double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid " + what + " \"" + text + "\"");
  }
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Rgb {
  double r, g, b;
};

Rgb lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
  const std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ULL +
                                             static_cast<std::uint64_t>(iy)));
  constexpr double scale = 1.0 / 2097152.0;  // 2^21
  return {static_cast<double>(h & 0x1fffff) * scale, static_cast<double>((h >> 21) & 0x1fffff) * scale,
          static_cast<double>((h >> 42) & 0x1fffff) * scale};
}

// Bilinearly interpolated lattice noise with the given cell size.
Rgb value_noise(std::uint64_t seed, double x, double y, double cell) {
  const double fx = x / cell, fy = y / cell;
  const double x0 = std::floor(fx), y0 = std::floor(fy);
  const double tx = fx - x0, ty = fy - y0;
  const auto ix = static_cast<std::int64_t>(x0), iy = static_cast<std::int64_t>(y0);
  const Rgb a = lattice(seed, ix, iy), b = lattice(seed, ix + 1, iy);
  const Rgb c = lattice(seed, ix, iy + 1), d = lattice(seed, ix + 1, iy + 1);
  auto blend = [&](double va, double vb, double vc, double vd) {
    return (va * (1 - tx) + vb * tx) * (1 - ty) + (vc * (1 - tx) + vd * tx) * ty;
  };
  return {blend(a.r, b.r, c.r, d.r), blend(a.g, b.g, c.g, d.g), blend(a.b, b.b, c.b, d.b)};
}

Rgb background_color(std::uint64_t seed, double x, double y) {
  const Rgb coarse = value_noise(seed, x, y, 32.0);
  const Rgb fine = value_noise(seed ^ 0x5bd1e995ULL, x, y, 8.0);
  return {30 + 100 * coarse.r + 60 * fine.r, 30 + 100 * coarse.g + 60 * fine.g, 30 + 100 * coarse.b + 60 * fine.b};
}

Rgb actor_color(std::uint64_t seed, double x, double y) {
  const Rgb coarse = value_noise(seed, x, y, 12.0);
  const Rgb fine = value_noise(seed ^ 0x27d4eb2fULL, x, y, 4.0);
  return {150 + 50 * coarse.r + 55 * fine.r, 120 + 50 * coarse.g + 55 * fine.g, 60 + 50 * coarse.b + 55 * fine.b};
}

double to_pixel(double v) { return std::clamp(std::round(v), 0.0, 255.0); }

auto stage_key(const MotionStage& s) { return std::make_tuple(s.dx, s.dy, static_cast<int>(s.shape)); }

std::vector<MotionStage> sorted_stages(std::vector<MotionStage> v) {
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return stage_key(a) < stage_key(b); });
  return v;
}

}  // namespace

MotionStage MotionStage::parse(const std::string& text) {
  const auto parts = split(trim(text), ':');
  if (parts.empty() || parts.size() > 3) throw ConfigError("invalid motion stage \"" + text + "\"");
  MotionStage s;
  const std::string dir = trim(parts[0]);
  double speed = 0.0;
  if (parts.size() >= 2) {
    speed = parse_number(trim(parts[1]), "stage speed");
    if (speed < 0) throw ConfigError("stage speed must be >= 0 in \"" + text + "\"");
  } else if (dir != "still") {
    throw ConfigError("motion stage \"" + text + "\" needs a speed");
  }
  if (dir == "right") {
    s.dx = speed;
  } else if (dir == "left") {
    s.dx = -speed;
  } else if (dir == "up") {
    s.dy = -speed;
  } else if (dir == "down") {
    s.dy = speed;
  } else if (dir == "still") {
  } else {
    std::string deg = dir;
    if (deg.size() > 3 && deg.ends_with("deg")) deg.resize(deg.size() - 3);
    const double rad = parse_number(deg, "stage direction") * std::numbers::pi / 180.0;
    s.dx = speed * std::cos(rad);
    s.dy = -speed * std::sin(rad);
  }
  if (parts.size() == 3) {
    const std::string shape = trim(parts[2]);
    if (shape == "rect") {
      s.shape = ActorShape::Rect;
    } else if (shape == "disk") {
      s.shape = ActorShape::Disk;
    } else {
      throw ConfigError("unknown actor shape \"" + shape + "\"");
    }
  }
  return s;
}

std::string MotionStage::str() const {
  std::string out;
  if (dx == 0 && dy == 0) {
    out = "still:0";
  } else if (dy == 0) {
    out = (dx > 0 ? "right:" : "left:") + format_double(std::abs(dx));
  } else if (dx == 0) {
    out = (dy < 0 ? "up:" : "down:") + format_double(std::abs(dy));
  } else {
    out = format_double(std::atan2(-dy, dx) * 180.0 / std::numbers::pi) + "deg:" + format_double(std::hypot(dx, dy));
  }
  return out + (shape == ActorShape::Disk ? ":disk" : ":rect");
}

std::vector<std::pair<int, int>> SyntheticSpec::order_pairs() const {
  std::vector<std::pair<int, int>> out;
  for (int a = 0; a < num_classes(); ++a) {
    for (int b = a + 1; b < num_classes(); ++b) {
      const auto& sa = classes[static_cast<std::size_t>(a)].stages;
      const auto& sb = classes[static_cast<std::size_t>(b)].stages;
      if (sa != sb && sa.size() == sb.size() && sorted_stages(sa) == sorted_stages(sb)) out.emplace_back(a, b);
    }
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (num_classes() < 2) throw ConfigError("synthetic spec needs at least 2 classes");
  if (frames < 2) throw ConfigError("synthetic spec needs at least 2 frames");
  if (height < 32 || width < 32) throw ConfigError("synthetic frames must be at least 32x32");
  if (actor_size < 2 || actor_size > std::min(height, width)) {
    throw ConfigError("actor_size must lie in [2, min(height, width)]");
  }
  if (camera_translation < 0 || camera_scale < 0 || camera_rotation_deg < 0 || camera_perspective < 0) {
    throw ConfigError("camera ranges must be non-negative");
  }
  if (camera_scale >= 0.5) throw ConfigError("camera_scale must be < 0.5");
  if (train_per_class < 1 || test_per_class < 0) {
    throw ConfigError("need train_per_class >= 1 and test_per_class >= 0");
  }
  if (!(flow_bound > 0)) throw ConfigError("flow_bound must be > 0");
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto& st = classes[c].stages;
    if (st.empty()) throw ConfigError("class " + std::to_string(c) + " has no stages");
    if (static_cast<int>(st.size()) > frames - 1) {
      throw ConfigError("class " + std::to_string(c) + " has more stages than frame pairs");
    }
  }
  if (order_pairs().empty()) {
    throw ConfigError("no pair of classes shares a stage multiset in a different order");
  }
}

SyntheticSpec SyntheticSpec::from_kv(const KeyValues& kv) {
  SyntheticSpec s;
  for (int c = 0;; ++c) {
    const auto stages = kv.find("class." + std::to_string(c));
    if (!stages) break;
    ClassDef def;
    def.name = kv.get_or("class." + std::to_string(c) + ".name", "class" + std::to_string(c));
    for (const auto& token : split(*stages, ',')) def.stages.push_back(MotionStage::parse(token));
    s.classes.push_back(std::move(def));
  }
  s.frames = static_cast<int>(kv.get_int_or("frames", s.frames));
  s.height = static_cast<int>(kv.get_int_or("height", s.height));
  s.width = static_cast<int>(kv.get_int_or("width", s.width));
  s.actor_size = static_cast<int>(kv.get_int_or("actor_size", s.actor_size));
  s.camera_translation = kv.get_double_or("camera_translation", s.camera_translation);
  s.camera_scale = kv.get_double_or("camera_scale", s.camera_scale);
  s.camera_rotation_deg = kv.get_double_or("camera_rotation_deg", s.camera_rotation_deg);
  s.camera_perspective = kv.get_double_or("camera_perspective", s.camera_perspective);
  s.texture_seed = static_cast<std::uint64_t>(kv.get_int_or("texture_seed", static_cast<long>(s.texture_seed)));
  s.train_per_class = static_cast<int>(kv.get_int_or("train_per_class", s.train_per_class));
  s.test_per_class = static_cast<int>(kv.get_int_or("test_per_class", s.test_per_class));
  s.flow_bound = kv.get_double_or("flow_bound", s.flow_bound);
  return s;
}

KeyValues SyntheticSpec::to_kv() const {
  KeyValues kv;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::string stages;
    for (const auto& st : classes[c].stages) stages += (stages.empty() ? "" : ",") + st.str();
    kv.set("class." + std::to_string(c), stages);
    kv.set("class." + std::to_string(c) + ".name", classes[c].name);
  }
  kv.set("frames", std::to_string(frames));
  kv.set("height", std::to_string(height));
  kv.set("width", std::to_string(width));
  kv.set("actor_size", std::to_string(actor_size));
  kv.set("camera_translation", format_double(camera_translation));
  kv.set("camera_scale", format_double(camera_scale));
  kv.set("camera_rotation_deg", format_double(camera_rotation_deg));
  kv.set("camera_perspective", format_double(camera_perspective));
  kv.set("texture_seed", std::to_string(texture_seed));
  kv.set("train_per_class", std::to_string(train_per_class));
  kv.set("test_per_class", std::to_string(test_per_class));
  kv.set("flow_bound", format_double(flow_bound));
  return kv;
}

SyntheticVideo::SyntheticVideo(std::shared_ptr<const SyntheticSpec> spec, std::string id, int label,
                               std::uint64_t seed)
    : spec_(std::move(spec)), id_(std::move(id)), label_(label) {
  const SyntheticSpec& s = *spec_;
  if (label < 0 || label >= s.num_classes()) throw ConfigError("label out of range for synthetic video " + id_);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x53594eu};
  Rng rng(seq);
  texture_seed_ = mix64(s.texture_seed ^ rng());

  auto sym = [&](double range) { return range > 0 ? std::uniform_real_distribution<double>(-range, range)(rng) : 0.0; };
  const double tx = sym(s.camera_translation), ty = sym(s.camera_translation);
  const double scale = 1.0 + sym(s.camera_scale);
  const double angle = sym(s.camera_rotation_deg) * std::numbers::pi / 180.0;
  const double p1 = sym(s.camera_perspective), p2 = sym(s.camera_perspective);
  const double cx = 0.5 * (s.width - 1), cy = 0.5 * (s.height - 1);
  const Homography core = Homography::normalized(
      {scale * std::cos(angle), -scale * std::sin(angle), 0, scale * std::sin(angle), scale * std::cos(angle), 0, p1, p2, 1});
  const Homography cam = Homography::translation(cx + tx, cy + ty) * core * Homography::translation(-cx, -cy);

  const int pairs = s.frames - 1;
  camera_.assign(static_cast<std::size_t>(pairs), cam);
  world_to_frame_inv_.resize(static_cast<std::size_t>(s.frames));
  Homography w = Homography::identity();
  for (int t = 0; t < s.frames; ++t) {
    world_to_frame_inv_[static_cast<std::size_t>(t)] = w.inverse();
    if (t < pairs) w = camera_[static_cast<std::size_t>(t)] * w;
  }

  const double half = 0.5 * s.actor_size;
  const auto& stages = s.classes[static_cast<std::size_t>(label)].stages;
  std::uniform_real_distribution<double> ux(half, s.width - half), uy(half, s.height - half);
  for (int attempt = 0; attempt < 2000; ++attempt) {
    std::vector<std::pair<double, double>> c(static_cast<std::size_t>(s.frames));
    c[0] = {ux(rng), uy(rng)};
    bool inside = true;
    for (int t = 0; t < s.frames && inside; ++t) {
      auto [x, y] = c[static_cast<std::size_t>(t)];
      inside = x - half >= 0 && x + half <= s.width && y - half >= 0 && y + half <= s.height;
      if (inside && t < pairs) {
        const auto& st = stages[static_cast<std::size_t>(stage_of_pair(t))];
        auto [hx, hy] = camera_[static_cast<std::size_t>(t)].apply(x, y);
        c[static_cast<std::size_t>(t) + 1] = {hx + st.dx, hy + st.dy};
      }
    }
    if (inside) {
      centers_ = std::move(c);
      return;
    }
  }
  throw ConfigError("actor leaves frame: no start position keeps class " + std::to_string(label) +
                    " inside the " + std::to_string(s.height) + "x" + std::to_string(s.width) + " frame");
}

int SyntheticVideo::stage_of_pair(int pair) const {
  const int pairs = spec_->frames - 1;
  const int stages = static_cast<int>(spec_->classes[static_cast<std::size_t>(label_)].stages.size());
  if (pair < 0 || pair >= pairs) throw ConfigError("frame pair " + std::to_string(pair) + " out of range");
  for (int st = stages - 1; st >= 0; --st) {
    if (pair >= st * pairs / stages) return st;
  }
  return 0;
}

bool SyntheticVideo::in_actor(int t, double x, double y) const {
  const auto [cx, cy] = centers_.at(static_cast<std::size_t>(t));
  const double half = 0.5 * spec_->actor_size;
  const double dx = x - cx, dy = y - cy;
  const auto& stages = spec_->classes[static_cast<std::size_t>(label_)].stages;
  const int pair = std::min(t, spec_->frames - 2);
  if (stages[static_cast<std::size_t>(stage_of_pair(pair))].shape == ActorShape::Disk) {
    return dx * dx + dy * dy < half * half;
  }
  return dx >= -half && dx < half && dy >= -half && dy < half;
}

Tensor SyntheticVideo::frame(int t) const {
  if (t < 0 || t >= spec_->frames) throw ConfigError("frame index " + std::to_string(t) + " out of range");
  const auto h = static_cast<std::size_t>(spec_->height), w = static_cast<std::size_t>(spec_->width);
  const Homography& to_world = world_to_frame_inv_[static_cast<std::size_t>(t)];
  const auto [cx, cy] = centers_[static_cast<std::size_t>(t)];
  const std::uint64_t actor_seed = mix64(texture_seed_ + 1);
  Tensor out({3, h, w});
  auto px = out.mutable_data();
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double x = static_cast<double>(j), y = static_cast<double>(i);
      Rgb c;
      if (in_actor(t, x, y)) {
        c = actor_color(actor_seed, x - cx, y - cy);
      } else {
        auto [wx, wy] = to_world.apply(x, y);
        c = background_color(texture_seed_, wx, wy);
      }
      px[i * w + j] = to_pixel(c.r);
      px[(h + i) * w + j] = to_pixel(c.g);
      px[(2 * h + i) * w + j] = to_pixel(c.b);
    }
  }
  return out;
}

FlowField SyntheticVideo::flow(int t) const {
  if (t < 0 || t + 1 >= spec_->frames) throw ConfigError("flow index " + std::to_string(t) + " out of range");
  const auto h = static_cast<std::size_t>(spec_->height), w = static_cast<std::size_t>(spec_->width);
  const Homography& cam = camera_[static_cast<std::size_t>(t)];
  const auto [c0x, c0y] = centers_[static_cast<std::size_t>(t)];
  const auto [c1x, c1y] = centers_[static_cast<std::size_t>(t) + 1];
  FlowField f = FlowField::zeros(h, w);
  auto u = f.u.mutable_data();
  auto v = f.v.mutable_data();
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double x = static_cast<double>(j), y = static_cast<double>(i);
      if (in_actor(t, x, y)) {
        u[i * w + j] = c1x - c0x;
        v[i * w + j] = c1y - c0y;
      } else {
        auto [qx, qy] = cam.apply(x, y);
        u[i * w + j] = qx - x;
        v[i * w + j] = qy - y;
      }
    }
  }
  return f;
}

namespace {

std::string video_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "vid_%05zu", index);
  return buf;
}

}  // namespace

SyntheticSplit make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  auto shared = std::make_shared<const SyntheticSpec>(spec);
  SyntheticSplit out;
  out.train.num_classes = out.test.num_classes = spec.num_classes();
  out.train.flow_bound = out.test.flow_bound = spec.flow_bound;
  const int per_class = spec.train_per_class + spec.test_per_class;
  const std::size_t total = static_cast<std::size_t>(per_class) * static_cast<std::size_t>(spec.num_classes());
  std::vector<std::shared_ptr<const VideoSource>> videos(total);
  parallel_for(total, [&](std::size_t index) {
    const int label = static_cast<int>(index % static_cast<std::size_t>(spec.num_classes()));
    videos[index] = std::make_shared<SyntheticVideo>(shared, video_id(index), label, mix64(seed) ^ mix64(index + 1));
  });
  for (std::size_t index = 0; index < total; ++index) {
    const int rank = static_cast<int>(index / static_cast<std::size_t>(spec.num_classes()));
    (rank < spec.train_per_class ? out.train : out.test).videos.push_back(videos[index]);
  }
  return out;
}

void generate_dataset(const SyntheticSpec& spec, std::uint64_t seed, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const SyntheticSplit data = make_synthetic(spec, seed);
  fs::create_directories(root / "splits");
  std::vector<const SyntheticVideo*> all;
  SplitList train, test;
  for (const auto* ds : {&data.train, &data.test}) {
    for (const auto& v : ds->videos) {
      all.push_back(static_cast<const SyntheticVideo*>(v.get()));
      (ds == &data.train ? train : test).push_back({"videos/" + v->id(), v->label()});
    }
  }
  std::sort(all.begin(), all.end(), [](const auto* a, const auto* b) { return a->id() < b->id(); });
  parallel_for(all.size(), [&](std::size_t i) {
    const SyntheticVideo& v = *all[i];
    const fs::path vdir = root / "videos" / v.id(), fdir = root / "flow" / v.id();
    fs::create_directories(vdir);
    fs::create_directories(fdir);
    for (int t = 0; t < v.num_frames(); ++t) write_tensor(vdir / frame_filename(t), v.frame(t), Payload::U8);
    std::ofstream cam(fdir / "camera.txt", std::ios::trunc);
    cam << "# pair h11 h12 h13 h21 h22 h23 h31 h32 h33\n";
    for (int t = 0; t + 1 < v.num_frames(); ++t) {
      write_tensor(fdir / flow_filename(t), v.flow(t).packed());
      cam << t;
      for (double m : v.camera(t).m) cam << ' ' << format_double(m);
      cam << '\n';
    }
    if (!cam) throw Error("cannot write " + (fdir / "camera.txt").string());
  });
  check_splits(train, test, spec.num_classes());
  save_split(root / "splits" / "train.txt", train);
  save_split(root / "splits" / "test.txt", test);

  std::ofstream labels(root / "labels.txt", std::ios::trunc);
  labels << "# class name stages\n";
  const KeyValues skv = spec.to_kv();
  for (int c = 0; c < spec.num_classes(); ++c) {
    labels << c << ' ' << spec.classes[static_cast<std::size_t>(c)].name << ' '
           << skv.get("class." + std::to_string(c)) << '\n';
  }
  if (!labels) throw Error("cannot write " + (root / "labels.txt").string());

  KeyValues meta;
  meta.set("num_classes", std::to_string(spec.num_classes()));
  meta.set("flow_bound", format_double(spec.flow_bound));
  meta.set("frames", std::to_string(spec.frames));
  meta.set("height", std::to_string(spec.height));
  meta.set("width", std::to_string(spec.width));
  meta.set("seed", std::to_string(seed));
  meta.save(root / "meta.txt");
  skv.save(root / "spec.txt");
}

}  // namespace tsn
