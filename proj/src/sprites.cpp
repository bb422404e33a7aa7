#include "sdiff/sprites.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace sdiff {

namespace {

const char* kTokenNames[kTokenCount] = {
    "#",      "red", "green",     "blue",   "yellow", "circle",
    "square", "bar", "translate", "bounce", "blink",  "grow",
};

// 8-bit palette entries, so rendered pixels sit exactly on the storage grid
const int kPaletteRgb[kColorCount][3] = {
    {230, 60, 60}, {70, 200, 90}, {70, 110, 230}, {235, 220, 80}};
const int kPaletteGray[kColorCount] = {120, 160, 200, 240};

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// triangle-wave position over [0, extent], step 1 per frame
int pingpong(int i, int extent) {
    if (extent <= 0) return 0;
    const int period = 2 * extent;
    const int m = i % period;
    return m <= extent ? m : period - m;
}

struct SpriteGeom {
    int half_w;
    int half_h;
};

SpriteGeom geom(int shape, int r) {
    switch (shape) {
        case 0: return {r, r};       // circle
        case 1: return {r, r};       // square
        default: return {0, r + 1};  // bar: 1 wide, 2r+3 tall
    }
}

bool covered(int shape, int dx, int dy, int r) {
    switch (shape) {
        case 0: return dx * dx + dy * dy <= r * r + r;  // r=1 plus-shape, r=2 chunky disk
        case 1: return std::abs(dx) <= r && std::abs(dy) <= r;
        default: return dx == 0 && std::abs(dy) <= r + 1;
    }
}

}  // namespace

const char* token_name(int id) {
    if (id < 0 || id >= kTokenCount)
        throw std::invalid_argument("unknown token id " + std::to_string(id));
    return kTokenNames[id];
}

int token_of(const std::string& name) {
    for (int i = 0; i < kTokenCount; ++i)
        if (name == kTokenNames[i]) return i;
    return -1;
}

void validate(const GenConfig& cfg) {
    auto fail = [](const std::string& m) { throw std::invalid_argument("GenConfig: " + m); };
    if (cfg.height != 8 && cfg.height != 16) fail("height must be 8 or 16");
    if (cfg.width != 8 && cfg.width != 16) fail("width must be 8 or 16");
    if (cfg.channels != 1 && cfg.channels != 3) fail("channels must be 1 or 3");
    if (cfg.n_min < 3) fail("n_min must be at least 3");
    if (cfg.n_max > 24) fail("n_max must be at most 24");
    if (cfg.n_min > cfg.n_max) fail("empty frame-count range");
    if (cfg.tail_exponent < 0) fail("tail exponent must be non-negative");
}

uint64_t config_hash(const GenConfig& cfg) {
    std::ostringstream os;
    os << "channels=" << cfg.channels << "\nheight=" << cfg.height << "\nn_max=" << cfg.n_max
       << "\nn_min=" << cfg.n_min << "\ntail=" << cfg.tail_exponent << "\nwidth=" << cfg.width
       << "\n";
    return fnv1a(os.str());
}

std::vector<int> caption_of(const Factors& f) {
    if (f.shape < 0 || f.shape >= kShapeCount || f.color < 0 || f.color >= kColorCount ||
        f.motion < 0 || f.motion >= kMotionCount)
        throw std::invalid_argument("caption_of: unknown factor id");
    return {kColorTokenBase + f.color, kShapeTokenBase + f.shape, kMotionTokenBase + f.motion};
}

Factors factors_of(const std::vector<int>& caption) {
    if (caption.size() != 3) throw std::invalid_argument("factors_of: caption length != 3");
    Factors f;
    f.color = caption[0] - kColorTokenBase;
    f.shape = caption[1] - kShapeTokenBase;
    f.motion = caption[2] - kMotionTokenBase;
    if (f.color < 0 || f.color >= kColorCount || f.shape < 0 || f.shape >= kShapeCount ||
        f.motion < 0 || f.motion >= kMotionCount)
        throw std::invalid_argument("factors_of: tokens out of factor ranges");
    return f;
}

std::vector<double> frame_count_pmf(const GenConfig& cfg) {
    std::vector<double> pmf;
    double z = 0;
    for (int n = cfg.n_min; n <= cfg.n_max; ++n) {
        pmf.push_back(std::pow(double(n), -cfg.tail_exponent));
        z += pmf.back();
    }
    for (double& p : pmf) p /= z;
    return pmf;
}

int sample_frame_count(Rng& rng, const GenConfig& cfg) {
    const std::vector<double> pmf = frame_count_pmf(cfg);
    const double u = rng.uniform();
    double acc = 0;
    for (size_t i = 0; i < pmf.size(); ++i) {
        acc += pmf[i];
        if (u < acc) return cfg.n_min + int(i);
    }
    return cfg.n_max;
}

Tensor render_frame(const Factors& f, const GenConfig& cfg, int frame_index, int phase) {
    const int H = cfg.height, W = cfg.width, C = cfg.channels;
    Tensor frame({H, W, C});
    double* px = frame.mutable_data();

    int r = 1;
    bool visible = true;
    // widest footprint over the whole motion bounds the travel range
    const int r_max = f.motion == 3 ? 2 : 1;
    const SpriteGeom gm_max = geom(f.shape, r_max);
    int cx = W / 2, cy = H / 2;
    const int i = frame_index + phase;
    switch (f.motion) {
        case 0:  // translate: horizontal sweep
            cx = gm_max.half_w + pingpong(i, W - 1 - 2 * gm_max.half_w);
            break;
        case 1:  // bounce: vertical sweep
            cy = gm_max.half_h + pingpong(i, H - 1 - 2 * gm_max.half_h);
            break;
        case 2:  // blink: alternate visibility
            visible = (i % 2) == 0;
            break;
        default:  // grow: size oscillates 1..2
            r = 1 + pingpong(i, 1);
            break;
    }

    if (visible) {
        double color[3];
        if (C == 3)
            for (int c = 0; c < 3; ++c) color[c] = kPaletteRgb[f.color][c] / 255.0;
        else
            color[0] = kPaletteGray[f.color] / 255.0;
        const SpriteGeom gm = geom(f.shape, r);
        for (int dy = -gm.half_h; dy <= gm.half_h; ++dy)
            for (int dx = -gm.half_w; dx <= gm.half_w; ++dx) {
                if (!covered(f.shape, dx, dy, r)) continue;
                const int x = cx + dx, y = cy + dy;
                if (x < 0 || x >= W || y < 0 || y >= H)
                    throw std::logic_error("render_frame: sprite left the canvas");
                for (int c = 0; c < C; ++c) px[(size_t(y) * W + x) * C + c] = color[c];
            }
    }
    return frame;
}

SpriteClip sample_clip(Rng& rng, const GenConfig& cfg) {
    validate(cfg);
    const int n = sample_frame_count(rng, cfg);
    Factors f;
    f.shape = int(rng.below(kShapeCount));
    f.color = int(rng.below(kColorCount));
    f.motion = int(rng.below(kMotionCount));
    const int phase = int(rng.below(8));

    SpriteClip clip;
    clip.factors = f;
    clip.caption = caption_of(f);
    Tensor frames({n, cfg.height, cfg.width, cfg.channels});
    double* dst = frames.mutable_data();
    const size_t frame_sz = size_t(cfg.height) * cfg.width * cfg.channels;
    for (int i = 0; i < n; ++i) {
        Tensor fr = render_frame(f, cfg, i, phase);
        std::copy(fr.data(), fr.data() + frame_sz, dst + size_t(i) * frame_sz);
    }
    clip.frames = std::move(frames);
    return clip;
}

Tensor canonical_frames(const SpriteClip& clip, int n) {
    const int N = clip.frame_count();
    const int H = clip.height(), W = clip.width(), C = clip.channels();
    Tensor out({n, H, W, C});
    double* dst = out.mutable_data();
    const size_t frame_sz = size_t(H) * W * C;
    for (int i = 0; i < n; ++i) {
        const int src = N >= n ? int(size_t(i) * size_t(N) / size_t(n)) : i % N;
        std::copy(clip.frames.data() + size_t(src) * frame_sz,
                  clip.frames.data() + size_t(src + 1) * frame_sz, dst + size_t(i) * frame_sz);
    }
    return out;
}

// ---------------------------------------------------------------------------
// dataset generation and storage
// ---------------------------------------------------------------------------

Dataset generate_dataset(const GenConfig& cfg, int count, uint64_t seed) {
    validate(cfg);
    if (count < 0) throw std::invalid_argument("generate_dataset: negative count");
    Dataset ds;
    ds.manifest.seed = seed;
    ds.manifest.config_hash = config_hash(cfg);
    Rng root(seed);
    for (int i = 0; i < count; ++i) {
        Rng sub = root.substream(uint64_t(i));
        SpriteClip clip = sample_clip(sub, cfg);
        char id[32];
        std::snprintf(id, sizeof id, "clip%05d", i);
        ClipRecord rec;
        rec.id = id;
        rec.frame_count = clip.frame_count();
        rec.factors = clip.factors;
        rec.caption = clip.caption;
        rec.path_prefix = std::string("frames/") + id;
        ds.manifest.records.push_back(std::move(rec));
        ds.clips.push_back(std::move(clip));
    }
    return ds;
}

namespace {

void write_pnm(const std::string& path, const Tensor& frames, int frame, int h, int w, int c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << (c == 3 ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
    const double* px = frames.data() + size_t(frame) * h * w * c;
    std::vector<unsigned char> row(size_t(w) * c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w * c; ++x)
            row[size_t(x)] = (unsigned char)std::lround(px[size_t(y) * w * c + x] * 255.0);
        out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
    }
    if (!out) throw std::runtime_error("short write to " + path);
}

void read_pnm(const std::string& path, double* dst, int h, int w, int c) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string magic;
    int fw = 0, fh = 0, maxval = 0;
    in >> magic >> fw >> fh >> maxval;
    in.get();
    if ((magic != "P5" && magic != "P6") || fw != w || fh != h || maxval != 255)
        throw std::runtime_error("bad pixmap header in " + path);
    if ((magic == "P6") != (c == 3)) throw std::runtime_error("channel mismatch in " + path);
    std::vector<unsigned char> buf(size_t(h) * w * c);
    in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    if (in.gcount() != std::streamsize(buf.size()))
        throw std::runtime_error("truncated pixmap " + path);
    for (size_t i = 0; i < buf.size(); ++i) dst[i] = buf[i] / 255.0;
}

std::string factors_str(const Factors& f) {
    return std::to_string(f.shape) + ":" + std::to_string(f.color) + ":" +
           std::to_string(f.motion);
}

Factors parse_factors(const std::string& s) {
    Factors f;
    if (std::sscanf(s.c_str(), "%d:%d:%d", &f.shape, &f.color, &f.motion) != 3)
        throw std::runtime_error("bad factors field '" + s + "'");
    return f;
}

}  // namespace

std::string manifest_to_string(const DatasetManifest& m) {
    std::ostringstream os;
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx", (unsigned long long)m.config_hash);
    os << "# seed=" << m.seed << " config=" << hex << "\n";
    for (const ClipRecord& r : m.records) {
        os << r.id << "\t" << r.frame_count << "\t" << factors_str(r.factors) << "\t";
        for (size_t i = 0; i < r.caption.size(); ++i) {
            if (i) os << ",";
            os << r.caption[i];
        }
        os << "\t" << r.path_prefix << "\n";
    }
    return os.str();
}

void write_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "frames");
    std::ofstream mf(fs::path(dir) / "manifest.tsv");
    if (!mf) throw std::runtime_error("cannot write manifest in " + dir);
    mf << manifest_to_string(ds.manifest);
    for (size_t i = 0; i < ds.clips.size(); ++i) {
        const SpriteClip& clip = ds.clips[i];
        const ClipRecord& rec = ds.manifest.records[i];
        const char* ext = clip.channels() == 3 ? ".ppm" : ".pgm";
        for (int fidx = 0; fidx < clip.frame_count(); ++fidx) {
            char name[64];
            std::snprintf(name, sizeof name, "_%02d%s", fidx, ext);
            write_pnm((fs::path(dir) / (rec.path_prefix + name)).string(), clip.frames, fidx,
                      clip.height(), clip.width(), clip.channels());
        }
    }
}

Dataset read_dataset(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.tsv");
    if (!mf) throw std::runtime_error("cannot open manifest in " + dir);
    Dataset ds;
    std::string line;
    if (!std::getline(mf, line) || line.rfind("# seed=", 0) != 0)
        throw std::runtime_error("manifest header missing in " + dir);
    {
        unsigned long long seed = 0, hash = 0;
        if (std::sscanf(line.c_str(), "# seed=%llu config=%llx", &seed, &hash) != 2)
            throw std::runtime_error("bad manifest header '" + line + "'");
        ds.manifest.seed = seed;
        ds.manifest.config_hash = hash;
    }
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ClipRecord rec;
        std::string factors, caption;
        std::string n;
        if (!std::getline(ls, rec.id, '\t') || !std::getline(ls, n, '\t') ||
            !std::getline(ls, factors, '\t') || !std::getline(ls, caption, '\t') ||
            !std::getline(ls, rec.path_prefix))
            throw std::runtime_error("malformed manifest record '" + line + "'");
        rec.frame_count = std::stoi(n);
        rec.factors = parse_factors(factors);
        std::istringstream cs(caption);
        std::string tok;
        while (std::getline(cs, tok, ',')) rec.caption.push_back(std::stoi(tok));
        ds.manifest.records.push_back(std::move(rec));
    }

    for (const ClipRecord& rec : ds.manifest.records) {
        if (rec.frame_count < 3)
            throw std::runtime_error("clip " + rec.id + ": frame count below 3");
        if (rec.caption != caption_of(rec.factors))
            throw std::runtime_error("clip " + rec.id + ": caption does not match factors");
        const char* ext = nullptr;
        for (const char* e : {".pgm", ".ppm"})
            if (fs::exists(fs::path(dir) / (rec.path_prefix + "_00" + e))) ext = e;
        if (!ext) throw std::runtime_error("clip " + rec.id + ": missing frame files");
        const int c = std::string(ext) == ".ppm" ? 3 : 1;
        int h = 0, w = 0;
        {
            std::ifstream probe(fs::path(dir) / (rec.path_prefix + "_00" + ext),
                                std::ios::binary);
            std::string magic;
            int maxv;
            probe >> magic >> w >> h >> maxv;
            if (!probe) throw std::runtime_error("clip " + rec.id + ": unreadable frame header");
        }
        SpriteClip clip;
        clip.factors = rec.factors;
        clip.caption = rec.caption;
        Tensor frames({rec.frame_count, h, w, c});
        for (int fidx = 0; fidx < rec.frame_count; ++fidx) {
            char name[64];
            std::snprintf(name, sizeof name, "_%02d%s", fidx, ext);
            const std::string path = (fs::path(dir) / (rec.path_prefix + name)).string();
            try {
                read_pnm(path, frames.mutable_data() + size_t(fidx) * h * w * c, h, w, c);
            } catch (const std::exception& e) {
                throw std::runtime_error("clip " + rec.id + ": " + e.what());
            }
        }
        clip.frames = std::move(frames);
        ds.clips.push_back(std::move(clip));
    }
    return ds;
}

}  // namespace sdiff
