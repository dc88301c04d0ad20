fn main() {
    std::process::exit(qnoise::run::main_entry());
}
