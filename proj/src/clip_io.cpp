#include "lart/tracklet.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace lart {
namespace {

// Floats are written with 9 significant digits, which round-trips every
// IEEE single exactly.
void put_float(std::string& out, float v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  out.push_back(' ');
  out.append(buf, res.ptr);
}

template <typename Derived>
void put_floats(std::string& out, const Eigen::DenseBase<Derived>& m, bool row_major = true) {
  if (row_major) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put_float(out, m(r, c));
  } else {
    for (Eigen::Index i = 0; i < m.size(); ++i) put_float(out, m.derived().data()[i]);
  }
}

class Line {
 public:
  Line(std::string text, int number) : text_(std::move(text)), number_(number) {}

  std::string_view word() {
    skip_space();
    const std::size_t begin = pos_;
    while (pos_ < text_.size() && text_[pos_] != ' ') ++pos_;
    if (begin == pos_) fail("unexpected end of line");
    return std::string_view(text_).substr(begin, pos_ - begin);
  }

  void expect(std::string_view keyword) {
    const auto w = word();
    if (w != keyword)
      fail("expected '" + std::string(keyword) + "', found '" + std::string(w) + "'");
  }

  int integer() {
    const auto w = word();
    int v = 0;
    auto res = std::from_chars(w.data(), w.data() + w.size(), v);
    if (res.ec != std::errc() || res.ptr != w.data() + w.size())
      fail("malformed integer '" + std::string(w) + "'");
    return v;
  }

  float real() {
    const auto w = word();
    float v = 0;
    auto res = std::from_chars(w.data(), w.data() + w.size(), v);
    if (res.ec != std::errc() || res.ptr != w.data() + w.size())
      fail("malformed number '" + std::string(w) + "'");
    return v;
  }

  void done() {
    skip_space();
    if (pos_ != text_.size()) fail("trailing content");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("clip file line " + std::to_string(number_) + ": " + what);
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && text_[pos_] == ' ') ++pos_;
  }

  std::string text_;
  int number_;
  std::size_t pos_ = 0;
};

class LineSource {
 public:
  explicit LineSource(std::istream& is) : is_(is) {}

  Line next() {
    std::string s;
    if (!std::getline(is_, s)) throw DataError("clip file truncated after line " + std::to_string(n_));
    ++n_;
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return Line(std::move(s), n_);
  }

 private:
  std::istream& is_;
  int n_ = 0;
};

}  // namespace

void write_clip(const Clip& c, std::ostream& os) {
  validate_clip(c);
  std::string out;
  out.reserve(1 << 16);
  out += kClipFormatVersion;
  out += '\n';
  out += "clip " + c.clip_id + " fps " + std::to_string(c.fps) + " frames " +
         std::to_string(c.num_frames) + " source " +
         (c.label_source == LabelSource::GroundTruth ? "gt" : "pseudo") + '\n';
  out += "catalog " + std::to_string(c.catalog.size()) + '\n';
  for (const auto& cls : c.catalog)
    out += "class " + cls.name + ' ' + std::string(to_string(cls.category)) + '\n';
  out += "tracks " + std::to_string(c.tracklets.size()) + '\n';
  for (const auto& t : c.tracklets) {
    // Frames that share one appearance sample reference it by index.
    std::vector<const AppearanceFeature*> samples;
    std::unordered_map<const AppearanceFeature*, int> sample_index;
    for (const auto& e : t.entries) {
      if (!e || !e->person.appearance) continue;
      const auto* a = e->person.appearance.get();
      if (sample_index.emplace(a, static_cast<int>(samples.size())).second) samples.push_back(a);
    }
    out += "track " + std::to_string(t.track_id) + " start " + std::to_string(t.start_frame) +
           " length " + std::to_string(t.length()) + " samples " +
           std::to_string(samples.size()) + '\n';
    for (std::size_t k = 0; k < samples.size(); ++k) {
      out += "sample " + std::to_string(k) + " frame " + std::to_string(samples[k]->source_frame) +
             " u";
      put_floats(out, samples[k]->u, false);
      out += '\n';
    }
    for (int k = 0; k < t.length(); ++k) {
      const auto& e = t.entries[static_cast<std::size_t>(k)];
      out += "frame " + std::to_string(t.start_frame + k);
      if (!e) {
        out += " absent\n";
        continue;
      }
      out += " box";
      put_float(out, e->box.x0);
      put_float(out, e->box.y0);
      put_float(out, e->box.x1);
      put_float(out, e->box.y1);
      out += " theta";
      for (const auto& r : e->person.pose.theta) put_floats(out, r);
      out += " psi";
      put_floats(out, e->person.pose.psi);
      out += " beta";
      put_floats(out, e->person.pose.beta);
      out += " location";
      put_floats(out, e->person.pose.location);
      if (e->person.appearance)
        out += " sample " + std::to_string(sample_index.at(e->person.appearance.get()));
      out += '\n';
    }
  }
  out += "labels " + std::to_string(c.labels.size()) + '\n';
  for (const auto& [key, entry] : c.labels) {
    out += "label " + std::to_string(key.first) + ' ' + std::to_string(key.second) + ' ' +
           (entry.evaluable ? "eval" : "hidden") + ' ';
    for (auto b : entry.classes) out += b ? '1' : '0';
    out += '\n';
  }
  out += "end\n";
  os << out;
  if (!os) throw Error("failed writing clip stream");
}

Clip read_clip(std::istream& is) {
  LineSource src(is);
  {
    Line header = src.next();
    const auto version = header.word();
    if (version != kClipFormatVersion)
      throw DataError("unsupported clip format version '" + std::string(version) + "'");
    header.done();
  }
  Clip c;
  {
    Line l = src.next();
    l.expect("clip");
    c.clip_id = std::string(l.word());
    l.expect("fps");
    c.fps = l.integer();
    l.expect("frames");
    c.num_frames = l.integer();
    l.expect("source");
    const auto s = l.word();
    if (s == "gt") c.label_source = LabelSource::GroundTruth;
    else if (s == "pseudo") c.label_source = LabelSource::Pseudo;
    else l.fail("unknown label source");
    l.done();
  }
  {
    Line l = src.next();
    l.expect("catalog");
    const int k = l.integer();
    l.done();
    if (k < 0) l.fail("negative class count");
    for (int i = 0; i < k; ++i) {
      Line cl = src.next();
      cl.expect("class");
      ActionClass cls;
      cls.name = std::string(cl.word());
      cls.category = category_from_string(cl.word());
      cl.done();
      c.catalog.push_back(std::move(cls));
    }
  }
  Line tl = src.next();
  tl.expect("tracks");
  const int n_tracks = tl.integer();
  tl.done();
  if (n_tracks < 0) tl.fail("negative track count");
  for (int ti = 0; ti < n_tracks; ++ti) {
    Line l = src.next();
    l.expect("track");
    Tracklet t;
    t.track_id = l.integer();
    l.expect("start");
    t.start_frame = l.integer();
    l.expect("length");
    const int length = l.integer();
    l.expect("samples");
    const int n_samples = l.integer();
    l.done();
    if (length < 0 || n_samples < 0) l.fail("negative track length");
    std::vector<AppearanceRef> samples;
    for (int k = 0; k < n_samples; ++k) {
      Line sl = src.next();
      sl.expect("sample");
      if (sl.integer() != k) sl.fail("samples out of order");
      sl.expect("frame");
      auto a = std::make_shared<AppearanceFeature>();
      a->source_frame = sl.integer();
      sl.expect("u");
      a->u.resize(kAppearanceDims);
      for (int i = 0; i < kAppearanceDims; ++i) a->u[i] = sl.real();
      sl.done();
      samples.push_back(std::move(a));
    }
    for (int k = 0; k < length; ++k) {
      Line fl = src.next();
      fl.expect("frame");
      if (fl.integer() != t.start_frame + k) fl.fail("frames out of order");
      const auto kind = fl.word();
      if (kind == "absent") {
        fl.done();
        t.entries.emplace_back();
        continue;
      }
      if (kind != "box") fl.fail("expected 'box' or 'absent'");
      Detection d;
      d.box = {fl.real(), fl.real(), fl.real(), fl.real()};
      fl.expect("theta");
      for (auto& r : d.person.pose.theta)
        for (int row = 0; row < 3; ++row)
          for (int col = 0; col < 3; ++col) r(row, col) = fl.real();
      fl.expect("psi");
      for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 3; ++col) d.person.pose.psi(row, col) = fl.real();
      fl.expect("beta");
      for (int i = 0; i < kShapeDims; ++i) d.person.pose.beta[i] = fl.real();
      fl.expect("location");
      for (int i = 0; i < 3; ++i) d.person.pose.location[i] = fl.real();
      if (n_samples > 0) {
        fl.expect("sample");
        const int idx = fl.integer();
        if (idx < 0 || idx >= n_samples) fl.fail("sample index out of range");
        d.person.appearance = samples[static_cast<std::size_t>(idx)];
      }
      fl.done();
      t.entries.emplace_back(std::move(d));
    }
    c.tracklets.push_back(std::move(t));
  }
  Line ll = src.next();
  ll.expect("labels");
  const int n_labels = ll.integer();
  ll.done();
  for (int i = 0; i < n_labels; ++i) {
    Line l = src.next();
    l.expect("label");
    const int track = l.integer();
    const int frame = l.integer();
    LabelEntry e;
    const auto flag = l.word();
    if (flag == "eval") e.evaluable = true;
    else if (flag == "hidden") e.evaluable = false;
    else l.fail("expected 'eval' or 'hidden'");
    const auto bits = l.word();
    for (char ch : bits) {
      if (ch != '0' && ch != '1') l.fail("label bits must be 0/1");
      e.classes.push_back(ch == '1');
    }
    l.done();
    if (!c.labels.emplace(LabelKey{track, frame}, std::move(e)).second)
      l.fail("duplicate label");
  }
  Line end = src.next();
  end.expect("end");
  end.done();
  validate_clip(c);
  return c;
}

void save_clip(const Clip& c, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_clip(c, os);
  os.close();
  if (!os) throw Error("failed writing " + path.string());
}

Clip load_clip(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open clip file " + path.string());
  return read_clip(is);
}

}  // namespace lart
