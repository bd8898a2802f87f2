fn main() {
    std::process::exit(hdys::ctl::dispatch(std::env::args_os()));
}
