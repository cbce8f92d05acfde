#include "pixar/corpus.hpp"

#include <algorithm>

#include "pixar/binary_io.hpp"
#include "pixar/error.hpp"
#include "pixar/text.hpp"

namespace pixar {

namespace {

std::string file_text(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

template <class F>
void for_each_line(std::string_view text, const std::string& source, F f) {
  std::size_t line_no = 0;
  for (auto line : text::split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    try {
      f(line);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<std::string> parse_docids(std::string_view text, const std::string& source) {
  std::vector<std::string> out;
  for_each_line(text, source, [&](std::string_view line) { out.push_back(text::unescape(line)); });
  return out;
}

std::vector<std::string> load_docids(const std::filesystem::path& path) {
  return parse_docids(file_text(path), path.string());
}

std::string format_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) {
    out += text::escape(l);
    out += '\n';
  }
  return out;
}

std::vector<QueryDocPair> parse_pairs(std::string_view text, const std::string& source) {
  std::vector<QueryDocPair> out;
  for_each_line(text, source, [&](std::string_view line) {
    const auto fields = text::split(line, '\t');
    if (fields.size() != 2) throw InvalidArgument("expected query<TAB>docid");
    QueryDocPair p{text::unescape(fields[0]), text::unescape(fields[1])};
    if (p.docid.empty()) throw InvalidArgument("empty docid");
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<QueryDocPair> load_pairs(const std::filesystem::path& path) {
  return parse_pairs(file_text(path), path.string());
}

std::string format_pairs(const std::vector<QueryDocPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += text::escape(p.query);
    out += '\t';
    out += text::escape(p.docid);
    out += '\n';
  }
  return out;
}

std::vector<std::string> unique_docids(std::vector<std::string> docids) {
  std::sort(docids.begin(), docids.end());
  docids.erase(std::unique(docids.begin(), docids.end()), docids.end());
  return docids;
}

}  // namespace pixar
