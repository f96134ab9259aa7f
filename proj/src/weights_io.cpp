#include "fishdreamer/weights_io.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include "fishdreamer/errors.hpp"

namespace fd {

namespace {

constexpr char kMagic[4] = {'F', 'D', 'W', '1'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated ") + what, pos_);
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_weights(const ModelWeights& w) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(w.size()));
  for (const auto& [name, t] : w.entries()) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

ModelWeights deserialize_weights(std::span<const std::uint8_t> bytes, const DreamerConfig* cfg) {
  Reader r(bytes);
  auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw FormatError("bad magic, not a weight file", 0);
  }
  std::unordered_set<std::string> known;
  if (cfg) {
    for (const auto& spec : weight_layout(*cfg)) known.insert(spec.name);
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  ModelWeights w;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::size_t at = r.pos();
    const auto len = r.get<std::uint16_t>("name length");
    auto raw = r.take(len, "name");
    std::string name(raw.begin(), raw.end());
    if (cfg && !known.count(name)) throw FormatError("unknown tensor name '" + name + "'", at);
    if (w.contains(name)) throw FormatError("duplicate tensor name '" + name + "'", at);
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank == 0) throw FormatError("tensor '" + name + "' has rank 0", r.pos() - 1);
    Shape shape;
    for (std::uint8_t i = 0; i < rank; ++i) {
      const auto d = r.get<std::uint32_t>("dims");
      if (d == 0) throw FormatError("tensor '" + name + "' has a zero dimension", r.pos() - 4);
      shape.push_back(d);
    }
    const std::size_t n = shape_numel(shape);
    if (n > (bytes.size() - r.pos()) / 4) throw FormatError("truncated data of '" + name + "'", r.pos());
    std::vector<float> values(n);
    for (auto& v : values) v = std::bit_cast<float>(r.get<std::uint32_t>("data"));
    w.add(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw FormatError("trailing bytes after last tensor", r.pos());
  if (cfg) validate_weights(*cfg, w);
  return w;
}

void save_weights(const ModelWeights& w, const std::filesystem::path& path) {
  const auto bytes = serialize_weights(w);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

ModelWeights load_weights(const std::filesystem::path& path, const DreamerConfig* cfg) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_weights(bytes, cfg);
}

}  // namespace fd
