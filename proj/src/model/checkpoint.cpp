#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "copyhan/errors.hpp"
#include "copyhan/model.hpp"

namespace copyhan {

namespace {

constexpr char kMagic[8] = {'C', 'H', 'A', 'N', 'C', 'K', 'P', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void read_exact(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw DataError("checkpoint truncated");
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  read_exact(in, reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::string exact(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::string group_list(const std::set<ParamGroup>& groups) {
  std::string out;
  for (ParamGroup g : groups) {
    if (!out.empty()) out += ',';
    out += to_string(g);
  }
  return out;
}

std::map<std::string, std::string> parse_header(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint header line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& field(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("checkpoint header is missing '" + key + "'");
  return it->second;
}

std::size_t size_field(const std::map<std::string, std::string>& kv, const std::string& key) {
  const std::string& v = field(kv, key);
  try {
    std::size_t pos = 0;
    const auto n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw DataError("checkpoint header '" + key + "' is not an integer: " + v);
  }
}

double real_field(const std::map<std::string, std::string>& kv, const std::string& key) {
  const std::string& v = field(kv, key);
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw DataError("checkpoint header '" + key + "' is not a number: " + v);
  }
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& stage, std::ostream& out) {
  const ModelConfig& c = model.config();
  const TransformerConfig& t = c.transformer;
  std::ostringstream h;
  h << "d_model=" << t.d_model << '\n'
    << "n_layers=" << t.n_layers << '\n'
    << "m_heads=" << t.m_heads << '\n'
    << "d_ff=" << t.d_ff << '\n'
    << "vocab_src=" << t.vocab_src << '\n'
    << "vocab_tgt=" << t.vocab_tgt << '\n'
    << "dropout=" << exact(t.dropout) << '\n'
    << "max_len=" << t.max_len << '\n'
    << "label_smoothing=" << exact(t.label_smoothing) << '\n'
    << "n_context=" << c.n_context << '\n'
    << "copy_exclude_reserved=" << (c.copy.exclude_reserved ? 1 : 0) << '\n'
    << "copy_bias_init=" << exact(c.copy_bias_init) << '\n'
    << "embeddings=untied\n"
    << "variant=" << to_string(model.variant()) << '\n'
    << "stage=" << stage << '\n'
    << "groups=" << group_list(model.present_groups()) << '\n';
  const std::string header = h.str();

  std::vector<const NamedParam*> stored;
  for (const NamedParam& p : model.params()) {
    if (model.has_group(p.group)) stored.push_back(&p);
  }

  out.write(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put_u32(out, static_cast<std::uint32_t>(stored.size()));
  for (const NamedParam* p : stored) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    const Shape& s = p->value.shape();
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    for (std::size_t dim : s) put_u64(out, dim);
    for (double v : p->value.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw DataError("failed writing checkpoint");
}

void save_checkpoint(const Model& model, const std::string& stage, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  save_checkpoint(model, stage, out);
}

Model load_checkpoint(std::istream& in, CheckpointInfo* info) {
  char magic[8];
  read_exact(in, magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw DataError("not a checkpoint file (bad magic)");
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t header_len = get_u32(in);
  if (header_len > (1u << 20)) throw DataError("checkpoint header implausibly large");
  std::string header(header_len, '\0');
  read_exact(in, header.data(), header_len);
  const auto kv = parse_header(header);

  ModelConfig config;
  TransformerConfig& t = config.transformer;
  t.d_model = size_field(kv, "d_model");
  t.n_layers = size_field(kv, "n_layers");
  t.m_heads = size_field(kv, "m_heads");
  t.d_ff = size_field(kv, "d_ff");
  t.vocab_src = size_field(kv, "vocab_src");
  t.vocab_tgt = size_field(kv, "vocab_tgt");
  t.dropout = real_field(kv, "dropout");
  t.max_len = size_field(kv, "max_len");
  t.label_smoothing = real_field(kv, "label_smoothing");
  config.n_context = size_field(kv, "n_context");
  config.copy.exclude_reserved = size_field(kv, "copy_exclude_reserved") != 0;
  config.copy_bias_init = real_field(kv, "copy_bias_init");
  if (field(kv, "embeddings") != "untied") throw DataError("checkpoint uses unsupported embedding sharing");
  try {
    config.validate();
  } catch (const ContractError& e) {
    throw DataError(std::string("checkpoint configuration invalid: ") + e.what());
  }

  std::set<ParamGroup> groups;
  {
    std::istringstream gs(field(kv, "groups"));
    std::string g;
    while (std::getline(gs, g, ',')) groups.insert(param_group_from_string(g));
  }
  if (!groups.count(ParamGroup::Base)) throw DataError("checkpoint lacks the base parameter group");

  Model model(config, 0);
  model.set_variant(variant_from_string(field(kv, "variant")));
  for (ParamGroup g : groups) model.mark_present(g);

  std::map<std::string, NamedParam> expected;
  for (const NamedParam& p : model.params()) {
    if (groups.count(p.group)) expected.emplace(p.name, p);
  }

  const std::uint32_t count = get_u32(in);
  if (count != expected.size()) {
    throw DataError("checkpoint holds " + std::to_string(count) + " arrays but its configuration implies " +
                    std::to_string(expected.size()));
  }
  for (std::uint32_t a = 0; a < count; ++a) {
    const std::uint32_t name_len = get_u32(in);
    if (name_len > 4096) throw DataError("checkpoint array name implausibly long");
    std::string name(name_len, '\0');
    read_exact(in, name.data(), name_len);
    auto it = expected.find(name);
    if (it == expected.end()) throw DataError("checkpoint has unexpected or duplicate array '" + name + "'");
    const std::uint32_t ndim = get_u32(in);
    if (ndim > 8) throw DataError("checkpoint array '" + name + "' has implausible rank");
    Shape shape(ndim);
    for (auto& dim : shape) dim = static_cast<std::size_t>(get_u64(in));
    Tensor target = it->second.value;
    if (shape != target.shape()) {
      throw DataError("checkpoint array '" + name + "' has shape " + shape_to_string(shape) + " but the model expects " +
                      shape_to_string(target.shape()));
    }
    auto data = target.mutable_data();
    for (double& v : data) v = std::bit_cast<double>(get_u64(in));
    expected.erase(it);
  }

  if (info) {
    info->config = config;
    info->variant = model.variant();
    info->stage = field(kv, "stage");
    info->groups = groups;
    info->header = kv;
  }
  return model;
}

Model load_checkpoint(const std::string& path, CheckpointInfo* info) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  return load_checkpoint(in, info);
}

}  // namespace copyhan
