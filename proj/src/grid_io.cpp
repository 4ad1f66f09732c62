#include "fnaf/grid_io.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fnaf::io {

namespace {

constexpr const char* kModule = "grid_io";

static_assert(std::endian::native == std::endian::little, "FGRID payloads are written in native little-endian order");

std::filesystem::path sidecar_path(const std::filesystem::path& stem) {
    auto p = stem;
    p += ".json";
    return p;
}

std::filesystem::path payload_path(const std::filesystem::path& stem) {
    auto p = stem;
    p += ".bin";
    return p;
}

void write_header(const std::filesystem::path& stem, std::size_t rows, std::size_t cols, const char* dtype) {
    nlohmann::ordered_json header;
    header["format"] = "FGRID v1";
    header["rows"] = rows;
    header["cols"] = cols;
    header["dtype"] = dtype;
    header["byte_order"] = "little";
    header["payload"] = payload_path(stem).filename().string();
    write_text(sidecar_path(stem), header.dump(2) + "\n");
}

struct Header {
    std::size_t rows;
    std::size_t cols;
    std::string dtype;
};

Header read_header(const std::filesystem::path& stem) {
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(read_text(sidecar_path(stem)));
        Header h{header.at("rows").get<std::size_t>(), header.at("cols").get<std::size_t>(),
                 header.at("dtype").get<std::string>()};
        if (header.at("byte_order").get<std::string>() != "little")
            throw Error(ErrorKind::Parse, kModule, "unsupported byte order in " + sidecar_path(stem).string());
        if (h.dtype != "f32" && h.dtype != "c64")
            throw Error(ErrorKind::Parse, kModule, "unsupported dtype '" + h.dtype + "'");
        return h;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, kModule, sidecar_path(stem).string() + ": " + e.what());
    }
}

std::vector<float> read_floats(const std::filesystem::path& path, std::size_t offset, std::size_t count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, kModule, "cannot open " + path.string());
    in.seekg(static_cast<std::streamoff>(offset * sizeof(float)));
    std::vector<float> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(count * sizeof(float)))
        throw Error(ErrorKind::Io, kModule, "short read from " + path.string());
    return buf;
}

void write_floats(const std::filesystem::path& path, const std::vector<float>& buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, kModule, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw Error(ErrorKind::Io, kModule, "write failed for " + path.string());
}

std::vector<std::uint8_t> to_bytes(const Image2D& img) {
    const double lo = min_value(img), hi = max_value(img);
    const double span = hi > lo ? hi - lo : 1.0;
    std::vector<std::uint8_t> bytes(img.size());
    for (std::size_t i = 0; i < img.size(); ++i)
        bytes[i] = static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * (img[i] - lo) / span), 0L, 255L));
    return bytes;
}

} // namespace

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, kModule, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, kModule, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorKind::Io, kModule, "write failed for " + path.string());
}

void write_fgrid(const std::filesystem::path& stem, const Image2D& img) {
    write_header(stem, img.rows(), img.cols(), "f32");
    std::vector<float> buf(img.size());
    std::transform(img.data().begin(), img.data().end(), buf.begin(), [](double v) { return static_cast<float>(v); });
    write_floats(payload_path(stem), buf);
}

void write_fgrid(const std::filesystem::path& stem, const ComplexGrid& grid) {
    write_header(stem, grid.rows(), grid.cols(), "c64");
    std::vector<float> buf(2 * grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        buf[2 * i] = static_cast<float>(grid[i].real());
        buf[2 * i + 1] = static_cast<float>(grid[i].imag());
    }
    write_floats(payload_path(stem), buf);
}

Image2D read_fgrid_image(const std::filesystem::path& stem) {
    const auto h = read_header(stem);
    if (h.dtype != "f32") throw Error(ErrorKind::Parse, kModule, "expected f32 grid, found " + h.dtype);
    const auto buf = read_floats(payload_path(stem), 0, h.rows * h.cols);
    return Image2D(h.rows, h.cols, std::vector<double>(buf.begin(), buf.end()));
}

ComplexGrid read_fgrid_complex(const std::filesystem::path& stem) {
    const auto h = read_header(stem);
    if (h.dtype != "c64") throw Error(ErrorKind::Parse, kModule, "expected c64 grid, found " + h.dtype);
    const auto buf = read_floats(payload_path(stem), 0, 2 * h.rows * h.cols);
    ComplexGrid g(h.rows, h.cols);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = Complex(buf[2 * i], buf[2 * i + 1]);
    return g;
}

Image2D read_fgrid_window(const std::filesystem::path& stem, std::size_t row, std::size_t col, std::size_t height,
                          std::size_t width) {
    const auto h = read_header(stem);
    if (h.dtype != "f32") throw Error(ErrorKind::Parse, kModule, "expected f32 grid, found " + h.dtype);
    if (row + height > h.rows || col + width > h.cols)
        throw Error(ErrorKind::InvalidInput, kModule, "window outside grid bounds");
    Image2D out(height, width);
    for (std::size_t r = 0; r < height; ++r) {
        const auto line = read_floats(payload_path(stem), (row + r) * h.cols + col, width);
        for (std::size_t c = 0; c < width; ++c) out(r, c) = line[c];
    }
    return out;
}

void write_pgm(const std::filesystem::path& path, const Image2D& img) { write_pgm_strip(path, {img}); }

void write_pgm_strip(const std::filesystem::path& path, const std::vector<Image2D>& panels) {
    if (panels.empty()) throw Error(ErrorKind::InvalidInput, kModule, "no panels to write");
    const std::size_t rows = panels.front().rows();
    std::size_t total_cols = 0;
    for (const auto& p : panels) {
        if (p.rows() != rows) throw Error(ErrorKind::InvalidInput, kModule, "panel heights differ");
        total_cols += p.cols();
    }
    std::vector<std::uint8_t> canvas(rows * total_cols);
    std::size_t offset = 0;
    for (const auto& p : panels) {
        const auto bytes = to_bytes(p);
        for (std::size_t r = 0; r < rows; ++r)
            std::memcpy(&canvas[r * total_cols + offset], &bytes[r * p.cols()], p.cols());
        offset += p.cols();
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, kModule, "cannot write " + path.string());
    out << "P5\n" << total_cols << " " << rows << "\n255\n";
    out.write(reinterpret_cast<const char*>(canvas.data()), static_cast<std::streamsize>(canvas.size()));
}

} // namespace fnaf::io
