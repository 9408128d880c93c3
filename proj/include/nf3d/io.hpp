#pragma once

#include "nf3d/geometry.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>

namespace nf3d {

enum class FileFormat { Auto, Obj, PlyAscii, PlyBinaryLE, Xyz };

inline FileFormat format_from_extension(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (ext == ".obj") return FileFormat::Obj;
  if (ext == ".ply") return FileFormat::PlyBinaryLE;  // loader sniffs the real encoding
  if (ext == ".xyz" || ext == ".txt") return FileFormat::Xyz;
  throw Error(ErrorKind::Parse, "cannot infer geometry format from extension '" + ext + "'");
}

/// 8-bit channel -> [-1, 1].
inline double color_from_u8(double c) { return 2.0 * (c / 255.0) - 1.0; }

/// [-1, 1] -> 8-bit channel, clamped.
inline std::uint8_t color_to_u8(double c) {
  double v = std::round(255.0 * (c + 1.0) / 2.0);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

namespace detail {

[[noreturn]] inline void parse_fail(const std::string& where, const std::string& msg) {
  throw Error(ErrorKind::Parse, where + ": " + msg);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double to_double(std::string_view tok, const std::string& where) {
  // std::from_chars for double is available in libstdc++ 11
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    parse_fail(where, "invalid number '" + std::string(tok) + "'");
  return v;
}

inline long long to_int(std::string_view tok, const std::string& where) {
  long long v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{}) parse_fail(where, "invalid integer '" + std::string(tok) + "'");
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Parse, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename LineFn>
void for_each_line(std::string_view text, LineFn&& fn) {
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto end = nl == std::string_view::npos ? text.size() : nl;
    ++line_no;
    auto line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(line, line_no);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
}

inline Shape parse_obj(std::string_view text) {
  TriMesh mesh;
  for_each_line(text, [&](std::string_view line, std::size_t ln) {
    const std::string where = "line " + std::to_string(ln);
    auto tok = split_ws(line);
    if (tok.empty() || tok[0][0] == '#') return;
    if (tok[0] == "v") {
      if (tok.size() < 4) parse_fail(where, "vertex needs 3 coordinates");
      mesh.vertices.emplace_back(to_double(tok[1], where), to_double(tok[2], where), to_double(tok[3], where));
    } else if (tok[0] == "f") {
      if (tok.size() < 4) parse_fail(where, "face needs at least 3 vertices");
      std::vector<std::uint32_t> idx;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        auto slash = tok[k].find('/');
        long long i = to_int(tok[k].substr(0, slash), where);
        long long nv = static_cast<long long>(mesh.vertices.size());
        long long resolved = i > 0 ? i - 1 : nv + i;
        if (i == 0 || resolved < 0 || resolved >= nv)
          parse_fail(where, "face index " + std::to_string(i) + " out of range (" + std::to_string(nv) +
                                " vertices defined)");
        idx.push_back(static_cast<std::uint32_t>(resolved));
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
    // vn/vt/o/g/s/usemtl and friends are ignored
  });
  validate(mesh);
  if (mesh.triangles.empty()) return PointCloud{std::move(mesh.vertices), {}};
  return mesh;
}

inline Shape parse_xyz(std::string_view text) {
  PointCloud pc;
  bool first = true, colored = false;
  for_each_line(text, [&](std::string_view line, std::size_t ln) {
    const std::string where = "line " + std::to_string(ln);
    auto tok = split_ws(line);
    if (tok.empty() || tok[0][0] == '#') return;
    if (tok.size() != 3 && tok.size() != 6) parse_fail(where, "expected 3 or 6 columns");
    if (first) {
      colored = tok.size() == 6;
      first = false;
    } else if (colored != (tok.size() == 6)) {
      parse_fail(where, "inconsistent column count");
    }
    pc.points.emplace_back(to_double(tok[0], where), to_double(tok[1], where), to_double(tok[2], where));
    if (colored)
      pc.colors.emplace_back(color_from_u8(to_double(tok[3], where)), color_from_u8(to_double(tok[4], where)),
                             color_from_u8(to_double(tok[5], where)));
  });
  validate(pc);
  return pc;
}

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

inline PlyType ply_type(std::string_view s, const std::string& where) {
  if (s == "char" || s == "int8") return PlyType::I8;
  if (s == "uchar" || s == "uint8") return PlyType::U8;
  if (s == "short" || s == "int16") return PlyType::I16;
  if (s == "ushort" || s == "uint16") return PlyType::U16;
  if (s == "int" || s == "int32") return PlyType::I32;
  if (s == "uint" || s == "uint32") return PlyType::U32;
  if (s == "float" || s == "float32") return PlyType::F32;
  if (s == "double" || s == "float64") return PlyType::F64;
  parse_fail(where, "unsupported property type '" + std::string(s) + "'");
}

inline std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::I8: case PlyType::U8: return 1;
    case PlyType::I16: case PlyType::U16: return 2;
    case PlyType::I32: case PlyType::U32: case PlyType::F32: return 4;
    case PlyType::F64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::F32;
  bool is_list = false;
  PlyType count_type = PlyType::U8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

static_assert(std::endian::native == std::endian::little, "binary PLY reader assumes a little-endian host");

inline double read_binary(const std::string& buf, std::size_t& pos, PlyType t) {
  const std::size_t n = ply_size(t);
  if (pos + n > buf.size()) parse_fail("byte " + std::to_string(pos), "unexpected end of binary PLY data");
  const char* p = buf.data() + pos;
  pos += n;
  switch (t) {
    case PlyType::I8: { std::int8_t v; std::memcpy(&v, p, 1); return v; }
    case PlyType::U8: { std::uint8_t v; std::memcpy(&v, p, 1); return v; }
    case PlyType::I16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::U16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::I32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::U32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::F32: { float v; std::memcpy(&v, p, 4); return v; }
    case PlyType::F64: { double v; std::memcpy(&v, p, 8); return v; }
  }
  return 0.0;
}

inline Shape parse_ply(const std::string& buf, FileFormat requested) {
  if (buf.rfind("ply", 0) != 0) parse_fail("byte 0", "missing 'ply' magic");
  std::vector<PlyElement> elements;
  bool binary = false;
  std::size_t pos = 0, line_no = 0;
  for (;;) {
    auto nl = buf.find('\n', pos);
    if (nl == std::string::npos) parse_fail("line " + std::to_string(line_no + 1), "unterminated PLY header");
    std::string_view line(buf.data() + pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = nl + 1;
    ++line_no;
    const std::string where = "line " + std::to_string(line_no);
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() < 2) parse_fail(where, "malformed format line");
      if (tok[1] == "ascii") binary = false;
      else if (tok[1] == "binary_little_endian") binary = true;
      else parse_fail(where, "unsupported PLY encoding '" + std::string(tok[1]) + "'");
    } else if (tok[0] == "element") {
      if (tok.size() < 3) parse_fail(where, "malformed element line");
      elements.push_back({std::string(tok[1]), static_cast<std::size_t>(to_int(tok[2], where)), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) parse_fail(where, "property before any element");
      PlyProperty prop;
      if (tok.size() >= 5 && tok[1] == "list") {
        prop.is_list = true;
        prop.count_type = ply_type(tok[2], where);
        prop.type = ply_type(tok[3], where);
        prop.name = tok[4];
      } else if (tok.size() >= 3) {
        prop.type = ply_type(tok[1], where);
        prop.name = tok[2];
      } else {
        parse_fail(where, "malformed property line");
      }
      elements.back().props.push_back(prop);
    }
    // comment / obj_info lines ignored
  }
  if (requested == FileFormat::PlyAscii && binary)
    throw Error(ErrorKind::Parse, "PLY header declares binary_little_endian but ascii was requested");

  PointCloud pc;
  TriMesh mesh;
  bool saw_vertex = false;

  // ascii body is tokenized lazily, one record per line
  std::vector<std::string_view> ascii_lines;
  std::size_t ascii_cursor = 0;
  if (!binary) {
    std::string_view body(buf.data() + pos, buf.size() - pos);
    for_each_line(body, [&](std::string_view l, std::size_t) {
      if (!split_ws(l).empty()) ascii_lines.push_back(l);
    });
  }
  const std::size_t header_lines = line_no;

  for (const auto& el : elements) {
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1, iface = -1;
    for (std::size_t k = 0; k < el.props.size(); ++k) {
      const auto& n = el.props[k].name;
      if (n == "x") ix = int(k);
      else if (n == "y") iy = int(k);
      else if (n == "z") iz = int(k);
      else if (n == "red" || n == "r") ir = int(k);
      else if (n == "green" || n == "g") ig = int(k);
      else if (n == "blue" || n == "b") ib = int(k);
      else if (n == "vertex_indices" || n == "vertex_index") iface = int(k);
    }
    if (is_vertex) {
      saw_vertex = true;
      if (ix < 0 || iy < 0 || iz < 0) throw Error(ErrorKind::Parse, "PLY vertex element lacks x/y/z");
    }
    if (is_face && iface < 0) throw Error(ErrorKind::Parse, "PLY face element lacks vertex_indices");
    const bool colored = is_vertex && ir >= 0 && ig >= 0 && ib >= 0;

    for (std::size_t r = 0; r < el.count; ++r) {
      std::vector<double> scalars(el.props.size(), 0.0);
      std::vector<long long> list;
      if (binary) {
        for (std::size_t k = 0; k < el.props.size(); ++k) {
          const auto& p = el.props[k];
          if (p.is_list) {
            auto cnt = static_cast<std::size_t>(read_binary(buf, pos, p.count_type));
            for (std::size_t q = 0; q < cnt; ++q) {
              double v = read_binary(buf, pos, p.type);
              if (int(k) == iface) list.push_back(static_cast<long long>(v));
            }
          } else {
            scalars[k] = read_binary(buf, pos, p.type);
          }
        }
      } else {
        const std::string where = "line " + std::to_string(header_lines + ascii_cursor + 1);
        if (ascii_cursor >= ascii_lines.size()) parse_fail(where, "unexpected end of PLY data");
        auto tok = split_ws(ascii_lines[ascii_cursor++]);
        std::size_t t = 0;
        auto next = [&]() -> std::string_view {
          if (t >= tok.size()) parse_fail(where, "too few values in element '" + el.name + "'");
          return tok[t++];
        };
        for (std::size_t k = 0; k < el.props.size(); ++k) {
          const auto& p = el.props[k];
          if (p.is_list) {
            auto cnt = static_cast<std::size_t>(to_int(next(), where));
            for (std::size_t q = 0; q < cnt; ++q) {
              auto v = to_int(next(), where);
              if (int(k) == iface) list.push_back(v);
            }
          } else {
            scalars[k] = to_double(next(), where);
          }
        }
      }
      if (is_vertex) {
        pc.points.emplace_back(scalars[ix], scalars[iy], scalars[iz]);
        if (colored)
          pc.colors.emplace_back(color_from_u8(scalars[ir]), color_from_u8(scalars[ig]), color_from_u8(scalars[ib]));
      } else if (is_face) {
        if (list.size() < 3) throw Error(ErrorKind::Parse, "face " + std::to_string(r) + " has fewer than 3 vertices");
        for (auto v : list)
          if (v < 0 || static_cast<std::size_t>(v) >= pc.points.size())
            throw Error(ErrorKind::Parse, "face " + std::to_string(r) + " index " + std::to_string(v) +
                                              " out of range (" + std::to_string(pc.points.size()) + " vertices)");
        for (std::size_t k = 1; k + 1 < list.size(); ++k)
          mesh.triangles.push_back({static_cast<std::uint32_t>(list[0]), static_cast<std::uint32_t>(list[k]),
                                    static_cast<std::uint32_t>(list[k + 1])});
      }
    }
  }
  if (!saw_vertex) throw Error(ErrorKind::Parse, "PLY file has no vertex element");
  if (!mesh.triangles.empty()) {
    mesh.vertices = std::move(pc.points);
    validate(mesh);
    return mesh;
  }
  validate(pc);
  return pc;
}

}  // namespace detail

/// Loads OBJ, PLY (ascii or binary little-endian) or XYZ. Files with faces come back
/// as TriMesh, vertex-only files as PointCloud.
inline Shape load_shape(const std::filesystem::path& path, FileFormat format = FileFormat::Auto) {
  if (format == FileFormat::Auto) format = format_from_extension(path);
  const std::string buf = detail::read_file(path);
  try {
    switch (format) {
      case FileFormat::Obj: return detail::parse_obj(buf);
      case FileFormat::Xyz: return detail::parse_xyz(buf);
      case FileFormat::PlyAscii:
      case FileFormat::PlyBinaryLE: return detail::parse_ply(buf, format);
      case FileFormat::Auto: break;
    }
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
  throw Error(ErrorKind::Parse, "unknown format");
}

inline void save_obj(const std::filesystem::path& path, const TriMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Parse, "cannot write '" + path.string() + "'");
  out << std::setprecision(9);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

namespace detail {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void write_ply(const std::filesystem::path& path, const std::vector<Vec3>& pts, const std::vector<Vec3>* colors,
                      const std::vector<Triangle>* faces, bool binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Parse, "cannot write '" + path.string() + "'");
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  out << "element vertex " << pts.size() << "\nproperty float x\nproperty float y\nproperty float z\n";
  if (colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (faces) out << "element face " << faces->size() << "\nproperty list uchar int vertex_indices\n";
  out << "end_header\n";
  out << std::setprecision(9);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    if (binary) {
      put(out, static_cast<float>(p.x()));
      put(out, static_cast<float>(p.y()));
      put(out, static_cast<float>(p.z()));
      if (colors)
        for (int c = 0; c < 3; ++c) put(out, color_to_u8((*colors)[i][c]));
    } else {
      out << static_cast<float>(p.x()) << ' ' << static_cast<float>(p.y()) << ' ' << static_cast<float>(p.z());
      if (colors)
        for (int c = 0; c < 3; ++c) out << ' ' << int(color_to_u8((*colors)[i][c]));
      out << '\n';
    }
  }
  if (faces) {
    for (const auto& t : *faces) {
      if (binary) {
        put(out, std::uint8_t{3});
        for (auto v : t) put(out, static_cast<std::int32_t>(v));
      } else {
        out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
      }
    }
  }
}

}  // namespace detail

inline void save_ply(const std::filesystem::path& path, const PointCloud& pc, bool binary = true) {
  detail::write_ply(path, pc.points, pc.has_colors() ? &pc.colors : nullptr, nullptr, binary);
}

inline void save_ply(const std::filesystem::path& path, const TriMesh& mesh, bool binary = true) {
  detail::write_ply(path, mesh.vertices, nullptr, &mesh.triangles, binary);
}

inline void save_xyz(const std::filesystem::path& path, const PointCloud& pc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Parse, "cannot write '" + path.string() + "'");
  out << std::setprecision(9);
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const auto& p = pc.points[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z();
    if (pc.has_colors())
      for (int c = 0; c < 3; ++c) out << ' ' << int(color_to_u8(pc.colors[i][c]));
    out << '\n';
  }
}

}  // namespace nf3d
