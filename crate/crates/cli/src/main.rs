fn main() -> std::process::ExitCode {
    orthofilt::main_with(std::env::args_os())
}
