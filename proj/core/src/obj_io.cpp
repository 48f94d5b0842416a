#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "semrecon/errors.hpp"
#include "semrecon/geometry.hpp"

namespace semrecon {

void write_obj(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw ParameterError("write_obj: cannot open " + path.string());
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const Vec2& t : mesh.uvs) {
    std::snprintf(buf, sizeof buf, "vt %.9g %.9g\n", t.x(), t.y());
    out << buf;
  }
  const bool uv = mesh.has_uv();
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    out << 'f';
    for (int k = 0; k < 3; ++k) {
      out << ' ' << mesh.faces[f][k] + 1;
      if (uv) out << '/' << mesh.face_uvs[f][k] + 1;
    }
    out << '\n';
  }
  if (!out) throw ParameterError("write_obj: write failed for " + path.string());
}

namespace {

// Parses "i", "i/t", "i/t/n" or "i//n" into zero-based (vertex, uv) indices.
void parse_corner(const std::string& token, int& v, int& t) {
  t = -1;
  const auto slash = token.find('/');
  try {
    v = std::stoi(token.substr(0, slash)) - 1;
    if (slash != std::string::npos) {
      const auto rest = token.substr(slash + 1);
      const auto slash2 = rest.find('/');
      const auto tex = rest.substr(0, slash2);
      if (!tex.empty()) t = std::stoi(tex) - 1;
    }
  } catch (const std::exception&) {
    throw ParameterError("read_obj: malformed face corner '" + token + "'");
  }
}

}  // namespace

Mesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("read_obj: cannot open " + path.string());
  Mesh mesh;
  bool all_uv = true;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw ParameterError("read_obj: malformed vertex");
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "vt") {
      double u, v;
      if (!(ls >> u >> v)) throw ParameterError("read_obj: malformed texture coordinate");
      mesh.uvs.emplace_back(u, v);
    } else if (tag == "f") {
      std::vector<std::string> corners;
      std::string c;
      while (ls >> c) corners.push_back(c);
      if (corners.size() != 3) throw ParameterError("read_obj: only triangular faces are supported");
      Face f{}, t{};
      for (int k = 0; k < 3; ++k) {
        parse_corner(corners[k], f[k], t[k]);
        if (t[k] < 0) all_uv = false;
      }
      mesh.faces.push_back(f);
      mesh.face_uvs.push_back(t);
    }
  }
  if (!all_uv || mesh.uvs.empty()) {
    mesh.face_uvs.clear();
    mesh.uvs.clear();
  }
  validate(mesh);
  return mesh;
}

}  // namespace semrecon
