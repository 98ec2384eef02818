#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <bihermitian/config.hpp>
#include <bihermitian/pipeline.hpp>
#include <bihermitian/plot.hpp>
#include <bihermitian/verify.hpp>

using namespace bihermitian;
namespace fs = std::filesystem;

namespace {

void print_warnings(const RunOutcome& r)
{
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
}

void print_summary(const RunOutcome& r, const fs::path& out)
{
    const auto& rep = r.report;
    std::cout << rep["verdict"].get<std::string>();
    if (rep["class"].is_string()) std::cout << " class=" << rep["class"].get<std::string>();
    if (rep["stage"].is_string()) std::cout << " stage=" << rep["stage"].get<std::string>();
    std::cout << " report=" << (out / "report.json").string() << "\n";
    if (rep["error"].is_string()) std::cerr << "error: " << rep["error"].get<std::string>() << "\n";
    for (const auto& d : rep["diagnostics"]) std::cerr << "diagnostic: " << d.get<std::string>() << "\n";
}

template <class Fn>
int guarded(Fn&& fn)
{
    try {
        return fn();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.kind(), "setup");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ExitIo;
    }
}

Json suite_json(const SuiteResult& s)
{
    Json checks = Json::array();
    for (const auto& c : s.checks)
        checks.push_back({{"name", c.name},
                          {"value", c.value},
                          {"relation", to_string(c.relation)},
                          {"bound", c.bound},
                          {"pass", c.pass}});
    Json metrics = Json::object();
    for (const auto& [k, v] : s.metrics) metrics[k] = v;
    return Json{{"suite", s.suite}, {"seed", s.seed}, {"passed", s.passed()}, {"checks", checks}, {"metrics", metrics},
                {"errors", s.errors}, {"seconds", s.seconds}};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Bi-Hermitian structures on diagonal Hopf surfaces: deformation, flow, verification and plots"};
    app.require_subcommand(1);

    std::string config, out, compare, suite, in, kind;
    std::uint64_t seed = 42;
    double stencil_fault = 1.0;

    auto* deform = app.add_subcommand("deform", "run the power-series deformation pipeline");
    deform->add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    deform->add_option("--out", out, "output directory")->required();

    auto* flow = app.add_subcommand("flow", "build omega(t) by the Hamiltonian flow");
    flow->add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    flow->add_option("--out", out, "output directory")->required();
    flow->add_option("--compare", compare, "deform output directory holding a matching series dump");

    auto* verify = app.add_subcommand("verify", "run the property suites");
    verify->add_option("--suite", suite, "pointwise, geometry, hodge or all")
        ->required()
        ->check(CLI::IsMember({"pointwise", "geometry", "hodge", "all"}));
    verify->add_option("--seed", seed, "random seed")->capture_default_str();
    verify->add_option("--inject-stencil-fault", stencil_fault)->group("");

    auto* plot = app.add_subcommand("plot", "emit CSV slices and an SVG line plot");
    plot->add_option("--in", in, "report.json or a field dump header (.json)")->required();
    plot->add_option("--kind", kind, "p-slice, residual-vs-n, residual-vs-refinement or scan")->required();
    plot->add_option("--out", out, "CSV output; the SVG goes next to it")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return ExitConfig;
    }

    if (*deform || *flow) {
        return guarded([&] {
            const RunConfig cfg = load_config(config);
            DirLock lock(out);
            RunOutcome r = *deform ? run_deform(cfg, out)
                                   : run_flow(cfg, out, compare.empty() ? std::nullopt : std::optional<fs::path>(compare));
            print_warnings(r);
            print_summary(r, out);
            return r.exit_code;
        });
    }
    if (*verify) {
        return guarded([&] {
            VerifyHooks hooks;
            hooks.stencil_fault = stencil_fault;
            auto results = verify_suite(suite, seed, hooks);
            bool ok = true;
            Json summary = Json::array();
            for (const auto& s : results) {
                ok = ok && s.passed();
                summary.push_back(suite_json(s));
            }
            std::cout << Json{{"passed", ok}, {"seed", seed}, {"suites", summary}}.dump(2) << "\n";
            return ok ? ExitValid : ExitInvalid;
        });
    }
    return guarded([&] {
        make_plot(in, kind, out);
        std::cout << "wrote " << out << "\n";
        return ExitValid;
    });
}
