#include "widemeta/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

namespace fs = std::filesystem;

namespace widemeta {

namespace {

// Bilinear resample of an interleaved 8-bit image to size x size, per channel,
// scaled to [0,1].
Tensor<float> resize_to_tensor(const RawImage& img, int out_size, int out_channels) {
    Tensor<float> t({static_cast<std::size_t>(out_channels), static_cast<std::size_t>(out_size),
                     static_cast<std::size_t>(out_size)});
    const float sx = static_cast<float>(img.width) / out_size;
    const float sy = static_cast<float>(img.height) / out_size;
    auto sample = [&](int c, float x, float y) {
        const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, img.width - 1);
        const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, img.height - 1);
        const int x1 = std::min(x0 + 1, img.width - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const float fx = x - static_cast<float>(x0);
        const float fy = y - static_cast<float>(y0);
        auto px = [&](int xx, int yy) {
            return static_cast<float>(
                img.pixels[(static_cast<std::size_t>(yy) * img.width + xx) * img.channels + c]);
        };
        return (px(x0, y0) * (1 - fx) + px(x1, y0) * fx) * (1 - fy) +
               (px(x0, y1) * (1 - fx) + px(x1, y1) * fx) * fy;
    };
    for (int oc = 0; oc < out_channels; ++oc) {
        for (int oy = 0; oy < out_size; ++oy) {
            for (int ox = 0; ox < out_size; ++ox) {
                const float x = (static_cast<float>(ox) + 0.5f) * sx - 0.5f;
                const float y = (static_cast<float>(oy) + 0.5f) * sy - 0.5f;
                float v;
                if (img.channels >= out_channels) {
                    const int c = img.channels == out_channels ? oc : 0;
                    if (out_channels == 1 && img.channels == 3) {
                        v = (sample(0, x, y) + sample(1, x, y) + sample(2, x, y)) / 3.0f;
                    } else {
                        v = sample(c, x, y);
                    }
                } else {
                    v = sample(0, x, y);  // grayscale source feeding RGB slots
                }
                t.at((static_cast<std::size_t>(oc) * out_size + oy) * out_size + ox) =
                    v / 255.0f;
            }
        }
    }
    return t;
}

float tensor_mean(const Tensor<float>& t) {
    float s = 0;
    for (std::size_t i = 0; i < t.size(); ++i) s += t.at(i);
    return s / static_cast<float>(t.size());
}

}  // namespace

ClassPool load_image_tree(const std::string& root, int image_size, int channels) {
    if (!fs::exists(root)) throw IoError("dataset root does not exist: " + root);
    ClassPool pool;
    pool.channels = channels;
    pool.image_size = image_size;

    // Leaf directories holding PNGs become classes, sorted for determinism.
    std::vector<fs::path> class_dirs;
    for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator();
         ++it) {
        if (!it->is_directory()) continue;
        for (const auto& f : fs::directory_iterator(it->path())) {
            if (f.is_regular_file() && f.path().extension() == ".png") {
                class_dirs.push_back(it->path());
                break;
            }
        }
    }
    if (class_dirs.empty()) {
        // Flat layout where root itself is a single class is not supported;
        // a tree must have at least one class directory.
        throw IoError("no class directories with PNGs under " + root);
    }
    std::sort(class_dirs.begin(), class_dirs.end());

    for (const auto& dir : class_dirs) {
        std::vector<fs::path> files;
        for (const auto& f : fs::directory_iterator(dir))
            if (f.is_regular_file() && f.path().extension() == ".png") files.push_back(f.path());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw IntegrityError("class with zero images: " + dir.string());
        std::vector<Tensor<float>> images;
        for (const auto& f : files) {
            Tensor<float> t = resize_to_tensor(read_png(f.string()), image_size, channels);
            // Ink=1 convention: invert bright-background glyphs.
            if (channels == 1 && tensor_mean(t) > 0.5f)
                for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = 1.0f - t.at(i);
            images.push_back(std::move(t));
        }
        pool.classes.push_back(std::move(images));
        pool.class_names.push_back(fs::relative(dir, root).string());
    }
    return pool;
}

ClassPool filter_classes(const ClassPool& pool, const std::string& split_file) {
    std::ifstream is(split_file);
    if (!is) throw IoError("cannot open split file: " + split_file);
    std::set<std::string> keep;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) keep.insert(line);
    ClassPool out;
    out.channels = pool.channels;
    out.image_size = pool.image_size;
    for (std::size_t i = 0; i < pool.classes.size(); ++i) {
        if (keep.count(pool.class_names[i])) {
            out.classes.push_back(pool.classes[i]);
            out.class_names.push_back(pool.class_names[i]);
        }
    }
    return out;
}

namespace {

Tensor<float> rot90(const Tensor<float>& img) {
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor<float> out({C, W, H});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                // (y, x) -> (W-1-x, y)
                out.at((c * W + (W - 1 - x)) * H + y) = img.at((c * H + y) * W + x);
    return out;
}

}  // namespace

ClassPool rotate_augment(const ClassPool& pool) {
    ClassPool out;
    out.channels = pool.channels;
    out.image_size = pool.image_size;
    static const char* suffix[4] = {"rot000", "rot090", "rot180", "rot270"};
    for (std::size_t ci = 0; ci < pool.classes.size(); ++ci) {
        std::vector<std::vector<Tensor<float>>> rots(4);
        for (const auto& img : pool.classes[ci]) {
            if (img.dim(1) != img.dim(2))
                throw ContractError("rotate_augment requires square images");
            Tensor<float> r = img.clone();
            for (int k = 0; k < 4; ++k) {
                rots[static_cast<std::size_t>(k)].push_back(r.clone());
                r = rot90(r);
            }
        }
        for (int k = 0; k < 4; ++k) {
            out.classes.push_back(std::move(rots[static_cast<std::size_t>(k)]));
            out.class_names.push_back(pool.class_names[ci] + "/" + suffix[k]);
        }
    }
    return out;
}

Episode sample_episode(const ClassPool& pool, int n_way, int k_shot, int q_queries,
                       std::mt19937& rng) {
    if (static_cast<int>(pool.classes.size()) < n_way)
        throw CapacityError("sample_episode: pool has " + std::to_string(pool.classes.size()) +
                            " classes, need " + std::to_string(n_way));
    const int per_class = k_shot + q_queries;

    // Partial Fisher-Yates over class indices.
    std::vector<int> class_idx(pool.classes.size());
    for (std::size_t i = 0; i < class_idx.size(); ++i) class_idx[i] = static_cast<int>(i);
    for (int i = 0; i < n_way; ++i) {
        std::uniform_int_distribution<int> d(i, static_cast<int>(class_idx.size()) - 1);
        std::swap(class_idx[static_cast<std::size_t>(i)], class_idx[static_cast<std::size_t>(d(rng))]);
    }

    const std::size_t C = static_cast<std::size_t>(pool.channels);
    const std::size_t S = static_cast<std::size_t>(pool.image_size);
    Episode ep;
    ep.n_way = n_way;
    ep.k_shot = k_shot;
    ep.q_queries = q_queries;
    ep.support_x = Tensor<float>({static_cast<std::size_t>(n_way) * k_shot, C, S, S});
    ep.query_x = Tensor<float>({static_cast<std::size_t>(n_way) * q_queries, C, S, S});
    const std::size_t img_len = C * S * S;

    for (int w = 0; w < n_way; ++w) {
        const auto& images = pool.classes[static_cast<std::size_t>(class_idx[static_cast<std::size_t>(w)])];
        if (static_cast<int>(images.size()) < per_class)
            throw CapacityError("sample_episode: class has " + std::to_string(images.size()) +
                                " images, need " + std::to_string(per_class));
        std::vector<int> img_idx(images.size());
        for (std::size_t i = 0; i < img_idx.size(); ++i) img_idx[i] = static_cast<int>(i);
        for (int i = 0; i < per_class; ++i) {
            std::uniform_int_distribution<int> d(i, static_cast<int>(img_idx.size()) - 1);
            std::swap(img_idx[static_cast<std::size_t>(i)], img_idx[static_cast<std::size_t>(d(rng))]);
        }
        for (int i = 0; i < k_shot; ++i) {
            const auto& img = images[static_cast<std::size_t>(img_idx[static_cast<std::size_t>(i)])];
            std::copy(img.ptr(), img.ptr() + img_len,
                      ep.support_x.ptr() + (static_cast<std::size_t>(w) * k_shot + i) * img_len);
            ep.support_y.push_back(w);
        }
        for (int i = 0; i < q_queries; ++i) {
            const auto& img =
                images[static_cast<std::size_t>(img_idx[static_cast<std::size_t>(k_shot + i)])];
            std::copy(img.ptr(), img.ptr() + img_len,
                      ep.query_x.ptr() + (static_cast<std::size_t>(w) * q_queries + i) * img_len);
            ep.query_y.push_back(w);
        }
    }
    return ep;
}

Tensor<float> gaussian_kernel(int size, float sigma) {
    if (size < 3 || size % 2 == 0)
        throw ContractError("gaussian_kernel: size must be odd and >= 3, got " +
                            std::to_string(size));
    if (sigma <= 0) throw ContractError("gaussian_kernel: sigma must be positive");
    Tensor<float> k({static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
    const int r = size / 2;
    double sum = 0;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            const double di = i - r, dj = j - r;
            const double v = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
            k.at(static_cast<std::size_t>(i * size + j)) = static_cast<float>(v);
            sum += v;
        }
    for (std::size_t i = 0; i < k.size(); ++i)
        k.at(i) = static_cast<float>(k.at(i) / sum);
    return k;
}

namespace {

int reflect_index(int i, int n) {
    // Mirror without repeating the edge sample (…2,1,0,1,2…).
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

Tensor<float> convolve_reflect(const Tensor<float>& img, const Tensor<float>& kernel) {
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    const int size = static_cast<int>(kernel.dim(0));
    const int r = size / 2;
    Tensor<float> out(img.shape);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                float acc = 0;
                for (int ki = 0; ki < size; ++ki) {
                    const int sy = reflect_index(static_cast<int>(y) + ki - r,
                                                 static_cast<int>(H));
                    for (int kj = 0; kj < size; ++kj) {
                        const int sx = reflect_index(static_cast<int>(x) + kj - r,
                                                     static_cast<int>(W));
                        acc += kernel.at(static_cast<std::size_t>(ki * size + kj)) *
                               img.at((c * H + static_cast<std::size_t>(sy)) * W +
                                      static_cast<std::size_t>(sx));
                    }
                }
                out.at((c * H + y) * W + x) = std::clamp(acc, 0.0f, 1.0f);
            }
    return out;
}

struct BlurDrawn {
    int size;
    float sigma;
};

BlurDrawn draw_blur(const BlurConfig& cfg, std::mt19937& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, cfg.kernel_choices.size() - 1);
    std::uniform_real_distribution<float> sig(cfg.sigma_min, cfg.sigma_max);
    return {cfg.kernel_choices[pick(rng)], sig(rng)};
}

}  // namespace

Tensor<float> gaussian_blur(const Tensor<float>& image, const BlurConfig& cfg,
                            std::mt19937& rng) {
    const BlurDrawn d = draw_blur(cfg, rng);
    return convolve_reflect(image, gaussian_kernel(d.size, d.sigma));
}

Episode blur_episode(const Episode& ep, const BlurConfig& cfg, std::mt19937& rng) {
    if (cfg.apply == BlurApply::none) return ep;
    Episode out = ep;
    out.support_x = ep.support_x.clone();
    out.query_x = ep.query_x.clone();

    Tensor<float> task_kernel;
    if (cfg.draw == BlurDraw::per_task) {
        const BlurDrawn d = draw_blur(cfg, rng);
        task_kernel = gaussian_kernel(d.size, d.sigma);
    }
    auto blur_batch = [&](Tensor<float>& batch) {
        const std::size_t B = batch.dim(0);
        const std::size_t img_len = batch.size() / B;
        std::vector<std::size_t> shape(batch.shape.begin() + 1, batch.shape.end());
        for (std::size_t b = 0; b < B; ++b) {
            Tensor<float> img(shape);
            std::copy(batch.ptr() + b * img_len, batch.ptr() + (b + 1) * img_len, img.ptr());
            Tensor<float> blurred =
                cfg.draw == BlurDraw::per_task
                    ? convolve_reflect(img, task_kernel)
                    : gaussian_blur(img, cfg, rng);
            std::copy(blurred.ptr(), blurred.ptr() + img_len, batch.ptr() + b * img_len);
        }
    };
    if (cfg.target != BlurTarget::query_only) blur_batch(out.support_x);
    if (cfg.target != BlurTarget::support_only) blur_batch(out.query_x);
    return out;
}

ClassPool synth_glyph_pool(const SynthGlyphConfig& cfg, int instances_per_class) {
    ClassPool pool;
    pool.channels = 1;
    pool.image_size = cfg.image_size;
    const int S = cfg.image_size;
    std::mt19937 rng(static_cast<std::uint32_t>(cfg.seed ^ (cfg.seed >> 32)));
    std::uniform_real_distribution<float> coord(0.15f, 0.85f);
    std::normal_distribution<float> jitter(0.0f, cfg.jitter_std);

    auto rasterize = [&](const std::vector<float>& pts) {
        Tensor<float> img({1, static_cast<std::size_t>(S), static_cast<std::size_t>(S)});
        const int n_seg = static_cast<int>(pts.size() / 2) - 1;
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x) {
                const float px = (static_cast<float>(x) + 0.5f) / S;
                const float py = (static_cast<float>(y) + 0.5f) / S;
                float dmin = 1e9f;
                for (int s = 0; s < n_seg; ++s) {
                    const float ax = pts[static_cast<std::size_t>(2 * s)];
                    const float ay = pts[static_cast<std::size_t>(2 * s + 1)];
                    const float bx = pts[static_cast<std::size_t>(2 * s + 2)];
                    const float by = pts[static_cast<std::size_t>(2 * s + 3)];
                    const float vx = bx - ax, vy = by - ay;
                    const float len2 = vx * vx + vy * vy;
                    float t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0f;
                    t = std::clamp(t, 0.0f, 1.0f);
                    const float dx = px - (ax + t * vx), dy = py - (ay + t * vy);
                    dmin = std::min(dmin, std::sqrt(dx * dx + dy * dy));
                }
                // Anti-aliased stroke roughly one pixel wide.
                const float width = 0.75f / S;
                const float v = std::clamp(1.5f - dmin / width, 0.0f, 1.0f);
                img.at((static_cast<std::size_t>(y)) * S + static_cast<std::size_t>(x)) = v;
            }
        return img;
    };

    for (int c = 0; c < cfg.n_classes; ++c) {
        std::vector<float> tpl;
        for (int p = 0; p <= cfg.strokes_per_glyph; ++p) {
            tpl.push_back(coord(rng));
            tpl.push_back(coord(rng));
        }
        std::vector<Tensor<float>> images;
        for (int inst = 0; inst < instances_per_class; ++inst) {
            const float angle = cfg.jitter_std > 0 ? jitter(rng) : 0.0f;
            const float tx = cfg.jitter_std > 0 ? 0.5f * jitter(rng) : 0.0f;
            const float ty = cfg.jitter_std > 0 ? 0.5f * jitter(rng) : 0.0f;
            const float ca = std::cos(angle), sa = std::sin(angle);
            std::vector<float> pts = tpl;
            for (std::size_t p = 0; p < pts.size(); p += 2) {
                const float x = pts[p] - 0.5f, y = pts[p + 1] - 0.5f;
                pts[p] = ca * x - sa * y + 0.5f + tx;
                pts[p + 1] = sa * x + ca * y + 0.5f + ty;
            }
            images.push_back(rasterize(pts));
        }
        pool.classes.push_back(std::move(images));
        pool.class_names.push_back("glyph" + std::to_string(c));
    }
    return pool;
}

}  // namespace widemeta
