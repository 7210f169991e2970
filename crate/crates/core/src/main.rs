fn main() {
    std::process::exit(rulerunner::cli::run());
}
