#include "vidq/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>
#include <system_error>

#include "vidq/error.hpp"

namespace vidq {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
    throw DataError("not a decimal number: '" + std::string(text) + "'");
  }
  if (!std::isfinite(v)) throw DataError("non-finite number: '" + std::string(text) + "'");
  return v;
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  return out;
}

// Calls fn(fields, line_number) for each data line; wraps DataError with the
// file position.
void for_each_record(const std::filesystem::path& path,
                     const std::function<void(const std::vector<std::string_view>&)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string() + " for reading");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    try {
      fn(split(line, '\t'));
    } catch (const Error& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void require_fields(const std::vector<std::string_view>& fields, std::size_t n) {
  if (fields.size() != n) {
    throw DataError("expected " + std::to_string(n) + " tab-separated fields, found " +
                    std::to_string(fields.size()));
  }
}

std::string join_csv(std::span<const double> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

Vector parse_csv(std::string_view text) {
  Vector out;
  for (auto part : split(text, ',')) out.push_back(parse_double(part));
  return out;
}

std::uint32_t parse_index(std::string_view text) {
  std::uint32_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
    throw DataError("not a non-negative integer: '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

void write_pairs(const std::filesystem::path& path, std::span<const PairFileRecord> pairs) {
  auto out = open_out(path);
  for (const auto& p : pairs) out << p.pair_id << '\t' << join_csv(p.image_raw) << '\t' << join_csv(p.text_raw) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<PairFileRecord> read_pairs(const std::filesystem::path& path) {
  std::vector<PairFileRecord> out;
  for_each_record(path, [&](const auto& f) {
    require_fields(f, 3);
    PairFileRecord rec{std::string(f[0]), parse_csv(f[1]), parse_csv(f[2])};
    if (!out.empty() && (rec.image_raw.size() != out.front().image_raw.size() ||
                         rec.text_raw.size() != out.front().text_raw.size())) {
      throw DataError("vector length differs from the first record");
    }
    out.push_back(std::move(rec));
  });
  return out;
}

void write_clicks(const std::filesystem::path& path, std::span<const ClickRecord> clicks) {
  auto out = open_out(path);
  for (const auto& c : clicks) out << c.user_id << '\t' << c.ad_id << '\t' << c.label << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<ClickRecord> read_clicks(const std::filesystem::path& path) {
  std::vector<ClickRecord> out;
  for_each_record(path, [&](const auto& f) {
    require_fields(f, 3);
    if (f[2] != "0" && f[2] != "1") throw DataError("label must be 0 or 1, got '" + std::string(f[2]) + "'");
    out.push_back({std::string(f[0]), std::string(f[1]), f[2] == "1" ? 1 : 0});
  });
  return out;
}

void write_visual_map(const std::filesystem::path& path, const AdVisualMap& map) {
  auto out = open_out(path);
  for (const auto& [ad, id] : map) {
    out << ad << '\t' << id.coarse;
    for (auto s : id.segments) out << ',' << s;
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

AdVisualMap read_visual_map(const std::filesystem::path& path) {
  AdVisualMap out;
  std::size_t width = 0;
  for_each_record(path, [&](const auto& f) {
    require_fields(f, 2);
    const auto parts = split(f[1], ',');
    if (width == 0) width = parts.size();
    if (parts.size() != width) throw DataError("visual id has " + std::to_string(parts.size()) +
                                               " entries, earlier lines have " + std::to_string(width));
    VisualId id;
    id.coarse = parse_index(parts[0]);
    for (std::size_t i = 1; i < parts.size(); ++i) id.segments.push_back(parse_index(parts[i]));
    if (!out.emplace(std::string(f[0]), std::move(id)).second) {
      throw DataError("duplicate ad id '" + std::string(f[0]) + "'");
    }
  });
  return out;
}

void write_metrics(const std::filesystem::path& path, const Metrics& metrics) {
  auto out = open_out(path);
  for (const auto& [k, v] : metrics) out << k << '\t' << v << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

Metrics read_metrics(const std::filesystem::path& path) {
  Metrics out;
  for_each_record(path, [&](const auto& f) {
    require_fields(f, 2);
    out.emplace_back(std::string(f[0]), std::string(f[1]));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Binary container.

namespace {

const char* kind_name(ArtifactKind kind) {
  switch (kind) {
    case ArtifactKind::kCodebooks: return "codebooks";
    case ArtifactKind::kEncoder: return "encoder";
    case ArtifactKind::kCtrModel: return "ctr-model";
    case ArtifactKind::kQuantizerCheckpoint: return "quantizer-checkpoint";
  }
  return "unknown";
}

class Writer {
 public:
  explicit Writer(ArtifactKind kind) {
    bytes_.insert(bytes_.end(), std::begin(kMagic), std::end(kMagic));
    u32(kFormatVersion);
    u32(static_cast<std::uint32_t>(kind));
  }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void size(std::size_t v) {
    if (v > 0xffffffffu) throw InvalidArgument("dimension too large for the container format");
    u32(static_cast<std::uint32_t>(v));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void tensor(std::span<const double> t) {
    for (double v : t) f32(v);
  }
  void str(const std::string& s) {
    size(s.size());
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }

  Bytes take() { return std::move(bytes_); }

 private:
  Bytes bytes_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, ArtifactKind expected) : bytes_(bytes) {
    if (bytes_.size() < 4 || std::memcmp(bytes_.data(), kMagic, 4) != 0) {
      throw DataError("bad magic: expected \"VIDQ\"");
    }
    pos_ = 4;
    const std::uint32_t version = u32();
    if (version != kFormatVersion) {
      throw DataError("unsupported format version " + std::to_string(version) + " (expected " +
                      std::to_string(kFormatVersion) + ")");
    }
    const auto kind = static_cast<ArtifactKind>(u32());
    if (kind != expected) {
      throw DataError(std::string("file holds a ") + kind_name(kind) + " artifact, expected " +
                      kind_name(expected));
    }
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  void tensor(std::span<double> t) {
    need(4 * t.size());
    for (double& v : t) v = f32();
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void finish() const {
    if (pos_ != bytes_.size()) {
      throw DataError("shape mismatch: " + std::to_string(bytes_.size() - pos_) +
                      " trailing bytes after the declared tensors");
    }
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw DataError("truncated file: need " + std::to_string(n) + " bytes at offset " +
                      std::to_string(pos_) + ", " + std::to_string(bytes_.size() - pos_) + " left");
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

[[noreturn]] void shape_mismatch(const std::string& what) { throw DataError("shape mismatch: " + what); }

// Codebook header: d, N0, K, book count, then (N_k, d_k) per segment book.
void write_codebook_header(Writer& w, const CodebookSet& books) {
  w.size(books.dim());
  w.size(books.coarse().rows());
  w.size(books.num_segments());
  w.size(books.segments().size());
  for (const auto& s : books.segments()) {
    w.size(s.rows());
    w.size(s.cols());
  }
}

CodebookSet read_codebook_header(Reader& r) {
  const std::uint32_t d = r.u32();
  const std::uint32_t n0 = r.u32();
  const std::uint32_t k = r.u32();
  const std::uint32_t books = r.u32();
  if (books != k) {
    shape_mismatch("header declares K=" + std::to_string(k) + " but " + std::to_string(books) +
                   " segment books");
  }
  if (d == 0 || n0 == 0) shape_mismatch("codebook header has zero d or N0");
  if (k > 0 && d % k != 0) shape_mismatch("d=" + std::to_string(d) + " not divisible by K=" + std::to_string(k));
  std::vector<Matrix> segments;
  for (std::uint32_t s = 0; s < k; ++s) {
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (rows == 0 || cols != d / k) {
      shape_mismatch("segment book " + std::to_string(s) + " is " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", expected Nx" + std::to_string(d / k));
    }
    segments.emplace_back(rows, cols);
  }
  return CodebookSet(Matrix(n0, d), std::move(segments));
}

void write_encoder_header(Writer& w, const MlpEncoder& enc) {
  enc.validate();
  w.u32(static_cast<std::uint32_t>(enc.activation));
  const auto dims = enc.dims();
  w.size(enc.layers.size());
  for (auto d : dims) w.size(d);
}

MlpEncoder read_encoder_header(Reader& r) {
  const std::uint32_t act = r.u32();
  if (act != static_cast<std::uint32_t>(Activation::kRelu)) shape_mismatch("unknown activation tag " + std::to_string(act));
  const std::uint32_t layers = r.u32();
  if (layers == 0) shape_mismatch("encoder has no layers");
  std::vector<std::uint32_t> dims(layers + 1);
  for (auto& d : dims) {
    d = r.u32();
    if (d == 0) shape_mismatch("encoder layer width 0");
  }
  MlpEncoder enc;
  for (std::uint32_t l = 0; l < layers; ++l) enc.layers.push_back({Matrix(dims[l + 1], dims[l]), Vector(dims[l + 1], 0.0)});
  return enc;
}

template <typename Params>
void write_tensors(Writer& w, const Params& p) {
  p.for_each_tensor([&](std::span<const double> t) { w.tensor(t); });
}

template <typename Params>
void read_tensors(Reader& r, Params& p) {
  p.for_each_tensor([&](std::span<double> t) { r.tensor(t); });
}

}  // namespace

Bytes serialize_codebooks(const CodebookSet& books) {
  Writer w(ArtifactKind::kCodebooks);
  write_codebook_header(w, books);
  write_tensors(w, books);
  return w.take();
}

CodebookSet deserialize_codebooks(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, ArtifactKind::kCodebooks);
  CodebookSet books = read_codebook_header(r);
  read_tensors(r, books);
  r.finish();
  return books;
}

Bytes serialize_encoder(const MlpEncoder& enc) {
  Writer w(ArtifactKind::kEncoder);
  write_encoder_header(w, enc);
  write_tensors(w, enc);
  return w.take();
}

MlpEncoder deserialize_encoder(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, ArtifactKind::kEncoder);
  MlpEncoder enc = read_encoder_header(r);
  read_tensors(r, enc);
  r.finish();
  return enc;
}

Bytes serialize_checkpoint(const QuantizerCheckpoint& ckpt) {
  Writer w(ArtifactKind::kQuantizerCheckpoint);
  w.u32(ckpt.epoch);
  write_encoder_header(w, ckpt.img_encoder);
  write_encoder_header(w, ckpt.txt_encoder);
  write_codebook_header(w, ckpt.books);
  write_tensors(w, ckpt.img_encoder);
  write_tensors(w, ckpt.txt_encoder);
  write_tensors(w, ckpt.books);
  return w.take();
}

QuantizerCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, ArtifactKind::kQuantizerCheckpoint);
  const std::uint32_t epoch = r.u32();
  MlpEncoder img = read_encoder_header(r);
  MlpEncoder txt = read_encoder_header(r);
  CodebookSet books = read_codebook_header(r);
  if (img.output_dim() != books.dim() || txt.output_dim() != books.dim()) {
    shape_mismatch("encoder output dims do not match codebook dim " + std::to_string(books.dim()));
  }
  read_tensors(r, img);
  read_tensors(r, txt);
  read_tensors(r, books);
  r.finish();
  return QuantizerCheckpoint{std::move(img), std::move(txt), std::move(books), epoch};
}

// CTR header: vocabularies, table shapes, visual shape flag, towers, head dim.
Bytes serialize_ctr_model(const CtrModel& model) {
  const auto& p = model.params;
  p.validate();
  Writer w(ArtifactKind::kCtrModel);
  w.size(model.users.ids().size());
  for (const auto& id : model.users.ids()) w.str(id);
  w.size(model.ads.ids().size());
  for (const auto& id : model.ads.ids()) w.str(id);
  w.size(p.user_table.num_entries());
  w.size(p.user_table.dim());
  w.size(p.ad_table.num_entries());
  w.size(p.ad_table.dim());
  w.u32(p.has_visual() ? 1 : 0);
  if (p.has_visual()) {
    w.size(p.visual0->num_entries());
    w.size(p.visual0->dim());
    w.size(p.visual_segments.size());
    for (const auto& t : p.visual_segments) {
      w.size(t.num_entries());
      w.size(t.dim());
    }
  }
  write_encoder_header(w, p.user_tower);
  write_encoder_header(w, p.ad_tower);
  w.size(p.head_w.size());
  write_tensors(w, p);
  return w.take();
}

CtrModel deserialize_ctr_model(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, ArtifactKind::kCtrModel);
  CtrModel model;
  const std::uint32_t n_users = r.u32();
  for (std::uint32_t i = 0; i < n_users; ++i) model.users.add(r.str());
  const std::uint32_t n_ads = r.u32();
  for (std::uint32_t i = 0; i < n_ads; ++i) model.ads.add(r.str());
  if (model.users.ids().size() != n_users || model.ads.ids().size() != n_ads) {
    throw DataError("duplicate id in stored vocabulary");
  }
  auto& p = model.params;
  const std::uint32_t user_rows = r.u32();
  const std::uint32_t user_dim = r.u32();
  const std::uint32_t ad_rows = r.u32();
  const std::uint32_t ad_dim = r.u32();
  if (user_rows != model.users.num_rows() || ad_rows != model.ads.num_rows()) {
    shape_mismatch("table rows do not match vocabulary sizes");
  }
  p.user_table = EmbeddingTable(user_rows, user_dim);
  p.ad_table = EmbeddingTable(ad_rows, ad_dim);
  if (r.u32() != 0) {
    const std::uint32_t n0 = r.u32();
    const std::uint32_t dv = r.u32();
    const std::uint32_t k = r.u32();
    p.visual0 = EmbeddingTable(n0, dv);
    for (std::uint32_t s = 0; s < k; ++s) {
      const std::uint32_t rows = r.u32();
      const std::uint32_t cols = r.u32();
      p.visual_segments.emplace_back(rows, cols);
    }
  }
  p.user_tower = read_encoder_header(r);
  p.ad_tower = read_encoder_header(r);
  p.head_w.assign(r.u32(), 0.0);
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    shape_mismatch(e.what());
  }
  read_tensors(r, p);
  r.finish();
  return model;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto out = open_out(path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

Bytes read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string() + " for reading");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace vidq
