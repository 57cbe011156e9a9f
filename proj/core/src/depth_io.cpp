#include "depthshape/depth_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace depthshape {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary readers/writers assume a little-endian host");

[[noreturn]] void parse_fail(const std::filesystem::path &path, const std::string &what,
                             std::streamoff offset) {
    throw DataError(path.string() + ": " + what + " at byte " + std::to_string(offset));
}

std::ifstream open_input(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    return out;
}

/// Next whitespace-delimited token, skipping '#' comment lines. Returns the
/// token's starting offset through `where`.
std::string next_token(std::istream &in, std::streamoff &where) {
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (std::isspace(ch)) {
            ch = in.get();
        } else {
            break;
        }
    }
    where = in.tellg() == std::streampos(-1) ? -1 : static_cast<std::streamoff>(in.tellg()) - 1;
    std::string token;
    while (ch != EOF && !std::isspace(ch)) {
        token.push_back(static_cast<char>(ch));
        ch = in.get();
    }
    return token;
}

/// Comment lines of the form `# key=value` collected from a PNM-style header.
std::string header_comment_value(const std::string &text, const std::string &key) {
    size_t pos = 0;
    while ((pos = text.find('#', pos)) != std::string::npos) {
        const size_t eol = text.find('\n', pos);
        const std::string line = text.substr(pos, eol == std::string::npos ? eol : eol - pos);
        const size_t eq = line.find('=');
        if (eq != std::string::npos) {
            std::string k = line.substr(1, eq - 1);
            k.erase(std::remove_if(k.begin(), k.end(), ::isspace), k.end());
            if (k == key) {
                std::string v = line.substr(eq + 1);
                v.erase(std::remove_if(v.begin(), v.end(), ::isspace), v.end());
                return v;
            }
        }
        if (eol == std::string::npos) break;
        pos = eol;
    }
    return "";
}

} // namespace

void write_pfm(const DepthMap &depth, const std::filesystem::path &path) {
    std::ofstream out = open_output(path);
    out << "Pf\n# unit=" << to_string(depth.unit) << "\n"
        << depth.width() << " " << depth.height() << "\n-1.0\n";
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::vector<float> row(static_cast<size_t>(depth.width()));
    for (int r = depth.height() - 1; r >= 0; --r) { // PFM rows run bottom-up
        for (int c = 0; c < depth.width(); ++c)
            row[static_cast<size_t>(c)] =
                depth.valid(r, c) ? static_cast<float>(depth.values.at(r, c)) : nan;
        out.write(reinterpret_cast<const char *>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw DataError("write failed: " + path.string());
}

DepthMap read_pfm(const std::filesystem::path &path) {
    std::ifstream in = open_input(path);
    std::streamoff where = 0;
    const std::string magic = next_token(in, where);
    if (magic != "Pf") parse_fail(path, "expected PFM magic 'Pf'", where);

    // Re-scan the header region for the unit comment.
    const std::streamoff header_probe = in.tellg();
    in.seekg(0);
    std::string head(256, '\0');
    in.read(head.data(), 256);
    head.resize(static_cast<size_t>(in.gcount()));
    in.clear();
    in.seekg(header_probe);
    const std::string unit_text = header_comment_value(head, "unit");

    const std::string w_tok = next_token(in, where);
    const std::string h_tok = next_token(in, where);
    int width = 0, height = 0;
    try {
        width = std::stoi(w_tok);
        height = std::stoi(h_tok);
    } catch (...) {
        parse_fail(path, "malformed dimensions", where);
    }
    if (width <= 0 || height <= 0) parse_fail(path, "non-positive dimensions", where);
    const std::string scale_tok = next_token(in, where);
    double scale = 0.0;
    try {
        scale = std::stod(scale_tok);
    } catch (...) {
        parse_fail(path, "malformed scale header", where);
    }
    if (scale >= 0.0) parse_fail(path, "big-endian PFM not supported (scale must be negative)", where);

    DepthMap depth(height, width,
                   unit_text.empty() ? DepthUnit::Metric : depth_unit_from_string(unit_text));
    std::vector<float> row(static_cast<size_t>(width));
    for (int r = height - 1; r >= 0; --r) {
        const std::streamoff at = in.tellg();
        in.read(reinterpret_cast<char *>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (in.gcount() != static_cast<std::streamsize>(row.size() * sizeof(float)))
            parse_fail(path, "truncated payload", at);
        for (int c = 0; c < width; ++c) {
            const float v = row[static_cast<size_t>(c)];
            if (std::isnan(v)) continue;
            depth.values.at(r, c) = v;
            depth.mask.at(r, c) = 1;
        }
    }
    return depth;
}

void write_pgm16(const DepthMap &depth, const std::filesystem::path &path,
                 const Pgm16Options &options) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (size_t i = 0; i < depth.mask.size(); ++i) {
        if (!depth.mask.data[i]) continue;
        lo = std::min(lo, depth.values.data[i]);
        hi = std::max(hi, depth.values.data[i]);
    }
    if (!(lo <= hi)) throw DataError("write_pgm16: no valid pixels");
    double scale = options.scale.value_or(std::max((hi - lo) / 65534.0, 1e-12));
    double offset = options.offset.value_or(options.scale.has_value() ? 0.0 : lo - scale);

    std::ofstream out = open_output(path);
    out << "P5\n" << depth.width() << " " << depth.height() << "\n65535\n";
    std::vector<uint8_t> row(static_cast<size_t>(depth.width()) * 2);
    for (int r = 0; r < depth.height(); ++r) {
        for (int c = 0; c < depth.width(); ++c) {
            uint16_t q = 0;
            if (depth.valid(r, c)) {
                const double v = std::round((depth.values.at(r, c) - offset) / scale);
                q = static_cast<uint16_t>(std::clamp(v, 1.0, 65535.0));
            }
            row[static_cast<size_t>(2 * c)] = static_cast<uint8_t>(q >> 8); // PGM is big-endian
            row[static_cast<size_t>(2 * c) + 1] = static_cast<uint8_t>(q & 0xff);
        }
        out.write(reinterpret_cast<const char *>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw DataError("write failed: " + path.string());

    std::ofstream meta = open_output(path.string() + ".meta");
    char buf[96];
    std::snprintf(buf, sizeof buf, "scale=%.17g\noffset=%.17g\n", scale, offset);
    meta << buf << "unit=" << to_string(depth.unit) << "\ninvalid=0\n";
}

DepthMap read_pgm16(const std::filesystem::path &path) {
    std::ifstream meta_in(path.string() + ".meta");
    if (!meta_in) throw DataError("missing sidecar: " + path.string() + ".meta");
    double scale = 0.0, offset = 0.0;
    DepthUnit unit = DepthUnit::Metric;
    std::string line;
    while (std::getline(meta_in, line)) {
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "scale") scale = std::stod(value);
        else if (key == "offset") offset = std::stod(value);
        else if (key == "unit") unit = depth_unit_from_string(value);
    }
    if (!(scale > 0.0)) throw DataError("sidecar missing positive scale: " + path.string());

    std::ifstream in = open_input(path);
    std::streamoff where = 0;
    if (next_token(in, where) != "P5") parse_fail(path, "expected PGM magic 'P5'", where);
    int width = 0, height = 0, maxval = 0;
    try {
        width = std::stoi(next_token(in, where));
        height = std::stoi(next_token(in, where));
        maxval = std::stoi(next_token(in, where));
    } catch (...) {
        parse_fail(path, "malformed header", where);
    }
    if (maxval != 65535) parse_fail(path, "expected 16-bit maxval 65535", where);

    DepthMap depth(height, width, unit);
    std::vector<uint8_t> row(static_cast<size_t>(width) * 2);
    for (int r = 0; r < height; ++r) {
        const std::streamoff at = in.tellg();
        in.read(reinterpret_cast<char *>(row.data()), static_cast<std::streamsize>(row.size()));
        if (in.gcount() != static_cast<std::streamsize>(row.size()))
            parse_fail(path, "truncated payload", at);
        for (int c = 0; c < width; ++c) {
            const uint16_t q = static_cast<uint16_t>((row[static_cast<size_t>(2 * c)] << 8) |
                                                     row[static_cast<size_t>(2 * c) + 1]);
            if (q == 0) continue;
            depth.values.at(r, c) = q * scale + offset;
            depth.mask.at(r, c) = 1;
        }
    }
    return depth;
}

void write_depth_csv(const DepthMap &depth, const std::filesystem::path &path) {
    std::ofstream out = open_output(path);
    out << "# depthshape.depth_csv v1 width=" << depth.width() << " height=" << depth.height()
        << " unit=" << to_string(depth.unit) << "\n";
    char buf[48];
    for (int r = 0; r < depth.height(); ++r) {
        for (int c = 0; c < depth.width(); ++c) {
            if (c > 0) out << ',';
            if (depth.valid(r, c)) {
                std::snprintf(buf, sizeof buf, "%.17g", depth.values.at(r, c));
                out << buf;
            } else {
                out << "nan";
            }
        }
        out << '\n';
    }
    if (!out) throw DataError("write failed: " + path.string());
}

namespace {

struct CsvHeader {
    int width = 0, height = 0;
    DepthUnit unit = DepthUnit::Metric;
};

CsvHeader parse_csv_header(const std::filesystem::path &path, const std::string &line,
                           const std::string &format_name) {
    std::istringstream ss(line);
    std::string hash, name, version;
    ss >> hash >> name >> version;
    if (hash != "#" || name != format_name)
        parse_fail(path, "expected '# " + format_name + "' header", 0);
    if (version != "v1") parse_fail(path, "unsupported version '" + version + "'", 0);
    CsvHeader head;
    std::string token;
    while (ss >> token) {
        const size_t eq = token.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
        if (key == "width") head.width = std::stoi(value);
        else if (key == "height") head.height = std::stoi(value);
        else if (key == "unit") head.unit = depth_unit_from_string(value);
    }
    if (head.width <= 0 || head.height <= 0) parse_fail(path, "missing width/height", 0);
    return head;
}

} // namespace

DepthMap read_depth_csv(const std::filesystem::path &path) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) parse_fail(path, "empty file", 0);
    const CsvHeader head = parse_csv_header(path, line, "depthshape.depth_csv");
    DepthMap depth(head.height, head.width, head.unit);
    for (int r = 0; r < head.height; ++r) {
        const std::streamoff at = in.tellg();
        if (!std::getline(in, line)) parse_fail(path, "truncated payload", at);
        std::istringstream ss(line);
        std::string cell;
        for (int c = 0; c < head.width; ++c) {
            if (!std::getline(ss, cell, ',')) parse_fail(path, "short row", at);
            if (cell == "nan" || cell == "NaN") continue;
            try {
                depth.values.at(r, c) = std::stod(cell);
            } catch (...) {
                parse_fail(path, "malformed cell '" + cell + "'", at);
            }
            depth.mask.at(r, c) = 1;
        }
    }
    return depth;
}

namespace {

std::array<uint8_t, 3> depth_color(double t) {
    // Compact blue->cyan->yellow->red ramp on [0, 1].
    t = std::clamp(t, 0.0, 1.0);
    const double r = std::clamp(std::min(4.0 * t - 1.5, -4.0 * t + 4.5), 0.0, 1.0);
    const double g = std::clamp(std::min(4.0 * t - 0.5, -4.0 * t + 3.5), 0.0, 1.0);
    const double b = std::clamp(std::min(4.0 * t + 0.5, -4.0 * t + 2.5), 0.0, 1.0);
    return {static_cast<uint8_t>(255 * r), static_cast<uint8_t>(255 * g),
            static_cast<uint8_t>(255 * b)};
}

std::array<uint8_t, 3> segment_color(int id) {
    const uint64_t h = Rng::derive_seed(0x5eedf00d, static_cast<uint64_t>(id));
    return {static_cast<uint8_t>(64 + (h & 0x7f)), static_cast<uint8_t>(64 + ((h >> 8) & 0x7f)),
            static_cast<uint8_t>(64 + ((h >> 16) & 0x7f))};
}

} // namespace

void write_ply(const PointCloud &cloud, const std::filesystem::path &path,
               const PlyWriteOptions &options) {
    if (cloud.points.empty()) throw DataError("write_ply: refusing to write an empty cloud");
    if (options.color_by == PlyColorBy::Segment &&
        options.segment_ids.size() != cloud.points.size())
        throw ConfigError("write_ply: segment coloring needs one id per point");
    const bool provenance = options.include_provenance && cloud.has_provenance();
    const bool color = options.color_by != PlyColorBy::None;

    double z_lo = std::numeric_limits<double>::infinity(), z_hi = -z_lo;
    if (options.color_by == PlyColorBy::Depth) {
        for (const auto &p : cloud.points) {
            z_lo = std::min(z_lo, p.z());
            z_hi = std::max(z_hi, p.z());
        }
        if (!(z_hi > z_lo)) z_hi = z_lo + 1.0;
    }

    std::ofstream out = open_output(path);
    out << "ply\nformat "
        << (options.format == PlyFormat::Ascii ? "ascii" : "binary_little_endian")
        << " 1.0\ncomment depthshape point cloud, unit=" << to_string(cloud.unit)
        << "\nelement vertex " << cloud.points.size()
        << "\nproperty double x\nproperty double y\nproperty double z\n";
    if (provenance) out << "property int row\nproperty int col\n";
    if (color) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "end_header\n";

    for (size_t i = 0; i < cloud.points.size(); ++i) {
        const Eigen::Vector3d &p = cloud.points[i];
        std::array<uint8_t, 3> rgb{0, 0, 0};
        if (options.color_by == PlyColorBy::Depth)
            rgb = depth_color((p.z() - z_lo) / (z_hi - z_lo));
        else if (options.color_by == PlyColorBy::Segment)
            rgb = segment_color(options.segment_ids[i]);

        if (options.format == PlyFormat::Ascii) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", p.x(), p.y(), p.z());
            out << buf;
            if (provenance) out << ' ' << cloud.provenance[i][0] << ' ' << cloud.provenance[i][1];
            if (color)
                out << ' ' << int(rgb[0]) << ' ' << int(rgb[1]) << ' ' << int(rgb[2]);
            out << '\n';
        } else {
            double xyz[3] = {p.x(), p.y(), p.z()};
            out.write(reinterpret_cast<const char *>(xyz), sizeof xyz);
            if (provenance) {
                int32_t rc[2] = {cloud.provenance[i][0], cloud.provenance[i][1]};
                out.write(reinterpret_cast<const char *>(rc), sizeof rc);
            }
            if (color) out.write(reinterpret_cast<const char *>(rgb.data()), 3);
        }
    }
    if (!out) throw DataError("write failed: " + path.string());
}

PointCloud read_ply(const std::filesystem::path &path) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!std::getline(in, line) || line != "ply") parse_fail(path, "expected 'ply' magic", 0);
    bool binary = false;
    size_t n_vertices = 0;
    struct Property {
        std::string type, name;
    };
    std::vector<Property> props;
    bool in_vertex_element = false;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt == "binary_little_endian") binary = true;
            else if (fmt != "ascii") parse_fail(path, "unsupported PLY format " + fmt, 0);
        } else if (word == "element") {
            std::string name;
            ss >> name >> n_vertices;
            in_vertex_element = name == "vertex";
            if (!in_vertex_element) parse_fail(path, "only vertex elements supported", 0);
        } else if (word == "property" && in_vertex_element) {
            Property p;
            ss >> p.type >> p.name;
            props.push_back(p);
        } else if (word == "end_header") {
            break;
        }
    }

    auto scalar_size = [&](const std::string &type) -> size_t {
        if (type == "double") return 8;
        if (type == "float") return 4;
        if (type == "int" || type == "uint") return 4;
        if (type == "uchar" || type == "char") return 1;
        parse_fail(path, "unsupported property type " + type, in.tellg());
    };

    PointCloud cloud;
    cloud.points.reserve(n_vertices);
    const bool has_provenance = [&] {
        bool row = false, col = false;
        for (const auto &p : props) {
            row |= p.name == "row";
            col |= p.name == "col";
        }
        return row && col;
    }();

    for (size_t i = 0; i < n_vertices; ++i) {
        Eigen::Vector3d point = Eigen::Vector3d::Zero();
        std::array<int, 2> rc{0, 0};
        if (binary) {
            for (const auto &prop : props) {
                const size_t size = scalar_size(prop.type);
                char buf[8];
                const std::streamoff at = in.tellg();
                in.read(buf, static_cast<std::streamsize>(size));
                if (in.gcount() != static_cast<std::streamsize>(size))
                    parse_fail(path, "truncated vertex payload", at);
                double value = 0.0;
                if (prop.type == "double") std::memcpy(&value, buf, 8);
                else if (prop.type == "float") {
                    float f;
                    std::memcpy(&f, buf, 4);
                    value = f;
                } else if (prop.type == "int" || prop.type == "uint") {
                    int32_t v;
                    std::memcpy(&v, buf, 4);
                    value = v;
                } else {
                    value = static_cast<uint8_t>(buf[0]);
                }
                if (prop.name == "x") point.x() = value;
                else if (prop.name == "y") point.y() = value;
                else if (prop.name == "z") point.z() = value;
                else if (prop.name == "row") rc[0] = static_cast<int>(value);
                else if (prop.name == "col") rc[1] = static_cast<int>(value);
            }
        } else {
            const std::streamoff at = in.tellg();
            if (!std::getline(in, line)) parse_fail(path, "truncated vertex payload", at);
            std::istringstream ss(line);
            for (const auto &prop : props) {
                double value = 0.0;
                if (!(ss >> value)) parse_fail(path, "short vertex row", at);
                if (prop.name == "x") point.x() = value;
                else if (prop.name == "y") point.y() = value;
                else if (prop.name == "z") point.z() = value;
                else if (prop.name == "row") rc[0] = static_cast<int>(value);
                else if (prop.name == "col") rc[1] = static_cast<int>(value);
            }
        }
        cloud.points.push_back(point);
        if (has_provenance) cloud.provenance.push_back(rc);
    }
    return cloud;
}

void write_mask_pgm(const Grid<uint8_t> &mask, const std::filesystem::path &path) {
    std::ofstream out = open_output(path);
    out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
    out.write(reinterpret_cast<const char *>(mask.data.data()),
              static_cast<std::streamsize>(mask.data.size()));
    if (!out) throw DataError("write failed: " + path.string());
}

Grid<uint8_t> read_mask_pgm(const std::filesystem::path &path) {
    std::ifstream in = open_input(path);
    std::streamoff where = 0;
    if (next_token(in, where) != "P5") parse_fail(path, "expected PGM magic 'P5'", where);
    int width = 0, height = 0, maxval = 0;
    try {
        width = std::stoi(next_token(in, where));
        height = std::stoi(next_token(in, where));
        maxval = std::stoi(next_token(in, where));
    } catch (...) {
        parse_fail(path, "malformed header", where);
    }
    if (maxval != 255) parse_fail(path, "expected 8-bit maxval 255", where);
    Grid<uint8_t> mask(height, width, 0);
    const std::streamoff at = in.tellg();
    in.read(reinterpret_cast<char *>(mask.data.data()),
            static_cast<std::streamsize>(mask.data.size()));
    if (in.gcount() != static_cast<std::streamsize>(mask.data.size()))
        parse_fail(path, "truncated payload", at);
    return mask;
}

void write_sparse_csv(const SparseDepth &sparse, const std::filesystem::path &path,
                      DepthUnit unit) {
    std::ofstream out = open_output(path);
    out << "# depthshape.sparse_depth v1 width=" << sparse.width()
        << " height=" << sparse.height() << " unit=" << to_string(unit) << "\nrow,col,depth\n";
    char buf[48];
    for (int r = 0; r < sparse.height(); ++r) {
        for (int c = 0; c < sparse.width(); ++c) {
            if (!sparse.mask.at(r, c)) continue;
            std::snprintf(buf, sizeof buf, "%.17g", sparse.values.at(r, c));
            out << r << ',' << c << ',' << buf << '\n';
        }
    }
    if (!out) throw DataError("write failed: " + path.string());
}

SparseDepth read_sparse_csv(const std::filesystem::path &path) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) parse_fail(path, "empty file", 0);
    const CsvHeader head = parse_csv_header(path, line, "depthshape.sparse_depth");
    if (!std::getline(in, line) || line != "row,col,depth")
        parse_fail(path, "expected column header 'row,col,depth'", in.tellg());

    SparseDepth sparse;
    sparse.values = Grid<double>(head.height, head.width, 0.0);
    sparse.mask = Grid<uint8_t>(head.height, head.width, 0);
    while (true) {
        const std::streamoff at = in.tellg();
        if (!std::getline(in, line)) break;
        if (line.empty()) continue;
        int r = 0, c = 0;
        double d = 0.0;
        if (std::sscanf(line.c_str(), "%d,%d,%lf", &r, &c, &d) != 3)
            parse_fail(path, "malformed triple '" + line + "'", at);
        if (r < 0 || r >= head.height || c < 0 || c >= head.width)
            parse_fail(path, "pixel out of bounds", at);
        sparse.values.at(r, c) = d;
        sparse.mask.at(r, c) = 1;
    }
    return sparse;
}

} // namespace depthshape
