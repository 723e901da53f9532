#include <fstream>
#include <json.hpp>

#include "binary_io.hpp"
#include "rphoc/retrieval.hpp"

namespace rphoc {

void save_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["phoc_hash"] = store.phoc_hash();
  header["dim"] = store.dim();
  header["count"] = store.size();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write store " + path.string());
  out.write("RPHE", 4);
  detail::write_block(out, header.dump());
  for (const auto& r : store.records()) {
    detail::write_block(out, r.page_id);
    detail::write_i32(out, r.bbox.x);
    detail::write_i32(out, r.bbox.y);
    detail::write_i32(out, r.bbox.w);
    detail::write_i32(out, r.bbox.h);
    for (float v : r.vector) detail::write_f32(out, v);
  }
  if (!out) throw InvalidInput("failed writing store " + path.string());
}

EmbeddingStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open store " + path.string());
  detail::expect_magic(in, "RPHE", "store " + path.string());
  std::string hash;
  std::size_t dim = 0, count = 0;
  try {
    const auto header = nlohmann::json::parse(detail::read_block(in));
    hash = header.at("phoc_hash").get<std::string>();
    dim = header.at("dim").get<std::size_t>();
    count = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("store header: " + std::string(e.what()));
  }
  std::vector<EmbeddingRecord> records(count);
  for (auto& r : records) {
    r.page_id = detail::read_block(in, 1u << 16);
    r.bbox.x = detail::read_i32(in);
    r.bbox.y = detail::read_i32(in);
    r.bbox.w = detail::read_i32(in);
    r.bbox.h = detail::read_i32(in);
    r.vector.resize(dim);
    for (auto& v : r.vector) v = detail::read_f32(in);
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw InvalidInput("store: trailing bytes after records");
  return EmbeddingStore(std::move(hash), dim, std::move(records));
}

}  // namespace rphoc
