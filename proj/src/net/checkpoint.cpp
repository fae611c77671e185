#include "vxseg/checkpoint.hpp"

#include <set>

#include "../common/binary_io.hpp"
#include "../common/kv_text.hpp"
#include "vxseg/di2in.hpp"
#include "vxseg/errors.hpp"

namespace vxseg {
namespace {

void write_records(detail::ByteWriter& w, const std::vector<std::pair<std::string, Tensor>>& recs) {
  w.u32(static_cast<std::uint32_t>(recs.size()));
  for (const auto& [name, t] : recs) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    w.f32s(t.data(), t.size());
  }
}

std::vector<std::pair<std::string, Tensor>> read_records(detail::ByteReader& r, const char* block) {
  std::vector<std::pair<std::string, Tensor>> out;
  const auto n = r.u32();
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str("record name");
    if (!names.insert(name).second)
      throw FormatError(detail::concat(r.what(), ": duplicate ", block, " record '", name, "'"));
    const auto rank = r.u32();
    if (rank > 8) throw FormatError(detail::concat(r.what(), ": record '", name, "' has rank ", rank));
    Shape shape(rank);
    for (auto& e : shape) e = r.u32();
    Tensor t(shape);
    r.f32s(t.data(), t.size(), "record payload");
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace

std::string Checkpoint::kind() const {
  try {
    const auto kv = detail::parse_kv(spec_text, "checkpoint spec");
    const auto it = kv.find("kind");
    return it == kv.end() ? std::string() : it->second;
  } catch (const ContractViolation&) {
    return {};
  }
}

Checkpoint make_checkpoint(std::string spec_text, const ParameterSet& params) {
  Checkpoint c;
  c.spec_text = std::move(spec_text);
  for (const auto& p : params.params()) c.params.emplace_back(p.name, p.value);
  for (const auto& n : params.norms()) {
    c.stats.emplace_back(n.name + ".running_mean", n.running_mean);
    c.stats.emplace_back(n.name + ".running_var", n.running_var);
  }
  return c;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.bytes(std::string_view(kCheckpointMagic, 4));
  w.u16(kCheckpointVersion);
  w.str(ckpt.spec_text);
  write_records(w, ckpt.params);
  write_records(w, ckpt.stats);
  w.save(path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  auto r = detail::ByteReader::load(path);
  if (r.bytes(4, "magic") != std::string_view(kCheckpointMagic, 4))
    throw FormatError(detail::concat(path.string(), ": bad magic, expected \"VXCK\""));
  const auto version = r.u16();
  if (version != kCheckpointVersion)
    throw FormatError(detail::concat(path.string(), ": unsupported checkpoint version ", version,
                                     " (expected ", kCheckpointVersion, ")"));
  Checkpoint c;
  c.spec_text = r.str("spec text");
  c.params = read_records(r, "parameter");
  c.stats = read_records(r, "running-stat");
  if (r.remaining() != 0)
    throw FormatError(detail::concat(path.string(), ": ", r.remaining(), " trailing bytes"));
  return c;
}

void apply_checkpoint(const Checkpoint& ckpt, ParameterSet& params) {
  VXSEG_REQUIRE(ckpt.params.size() == params.size(), "checkpoint has ", ckpt.params.size(),
                " parameters, network has ", params.size());
  VXSEG_REQUIRE(ckpt.stats.size() == 2 * params.norms().size(), "checkpoint has ",
                ckpt.stats.size(), " running-stat records, network needs ",
                2 * params.norms().size());
  for (const auto& [name, t] : ckpt.params) {
    Parameter& p = params.at(name);
    VXSEG_REQUIRE(p.value.shape() == t.shape(), "checkpoint parameter '", name, "' has shape ",
                  shape_str(t.shape()), ", network expects ", shape_str(p.value.shape()));
    p.value = t;
  }
  for (const auto& [name, t] : ckpt.stats) {
    const auto dot = name.rfind('.');
    VXSEG_REQUIRE(dot != std::string::npos, "malformed running-stat name '", name, "'");
    NormState& n = params.norm(name.substr(0, dot));
    const std::string field = name.substr(dot + 1);
    Tensor& dst = field == "running_mean" ? n.running_mean : n.running_var;
    VXSEG_REQUIRE(field == "running_mean" || field == "running_var",
                  "unknown running-stat field '", field, "'");
    VXSEG_REQUIRE(dst.shape() == t.shape(), "running stat '", name, "' has the wrong shape");
    dst = t;
  }
}

void save_generator(const Di2in& net, const std::filesystem::path& path) {
  write_checkpoint(make_checkpoint(net.spec().to_text(), net.params()), path);
}

Di2in load_generator(const std::filesystem::path& path) {
  const Checkpoint c = read_checkpoint(path);
  if (c.kind() != "di2in")
    throw FormatError(detail::concat(path.string(), ": checkpoint kind is '", c.kind(),
                                     "', expected a di2in generator"));
  Di2in net(Di2inSpec::from_text(c.spec_text), 0);
  apply_checkpoint(c, net.params());
  return net;
}

}  // namespace vxseg
