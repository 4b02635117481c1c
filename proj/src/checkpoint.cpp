#include "ovp/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "ovp/jsonutil.hpp"

namespace ovp {

namespace {
constexpr char kMagic[4] = {'O', 'V', 'P', 'C'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const std::string& kind,
                     const nlohmann::json& hyper,
                     const std::vector<nn::ParamRef>& params) {
  std::ofstream f(path, std::ios::binary);
  check_data(f.good(), "checkpoint: cannot open for writing: " + path);
  f.write(kMagic, 4);
  f.write(reinterpret_cast<const char*>(&kVersion), 4);
  nlohmann::json header;
  header["kind"] = kind;
  header["hyper"] = hyper;
  nlohmann::json arrays = nlohmann::json::array();
  for (const nn::ParamRef& p : params)
    arrays.push_back({{"name", p.name}, {"shape", p.value->shape}});
  header["arrays"] = arrays;
  std::string hs = header.dump();
  std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
  f.write(reinterpret_cast<const char*>(&hlen), 4);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const nn::ParamRef& p : params)
    f.write(reinterpret_cast<const char*>(p.value->data.data()),
            static_cast<std::streamsize>(p.value->data.size() * sizeof(double)));
  check_data(f.good(), "checkpoint: write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check_data(f.good(), "checkpoint: cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  check_data(f.good() && std::memcmp(magic, kMagic, 4) == 0,
             "checkpoint: bad magic header in " + path);
  std::uint32_t version = 0, hlen = 0;
  f.read(reinterpret_cast<char*>(&version), 4);
  check_data(f.good() && version == kVersion,
             "checkpoint: unsupported version in " + path);
  f.read(reinterpret_cast<char*>(&hlen), 4);
  check_data(f.good(), "checkpoint: truncated header length");
  std::string hs(hlen, '\0');
  f.read(hs.data(), hlen);
  check_data(f.good(), "checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception&) {
    throw DataError("checkpoint: header is not valid JSON");
  }
  LoadedCheckpoint out;
  out.kind = json_require<std::string>(header, "kind", "checkpoint");
  out.hyper = json_require<nlohmann::json>(header, "hyper", "checkpoint");
  for (const auto& a :
       json_require<nlohmann::json>(header, "arrays", "checkpoint")) {
    std::string name = json_require<std::string>(a, "name", "checkpoint array");
    auto shape =
        json_require<std::vector<int>>(a, "shape", "checkpoint array");
    nn::Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    check_data(f.good(), "checkpoint: array payload truncated for " + name);
    check_data(out.arrays.emplace(name, std::move(t)).second,
               "checkpoint: duplicate array name " + name);
  }
  f.peek();
  check_data(f.eof(), "checkpoint: trailing bytes after payload");
  return out;
}

void assign_params(const LoadedCheckpoint& ckpt,
                   const std::vector<nn::ParamRef>& params) {
  check_data(ckpt.arrays.size() == params.size(),
             "checkpoint: array count does not match parameter count");
  for (const nn::ParamRef& p : params) {
    auto it = ckpt.arrays.find(p.name);
    check_data(it != ckpt.arrays.end(),
               "checkpoint: missing array " + p.name);
    check_data(it->second.shape == p.value->shape,
               "checkpoint: shape mismatch for " + p.name);
    *p.value = it->second;
  }
}

}  // namespace ovp
