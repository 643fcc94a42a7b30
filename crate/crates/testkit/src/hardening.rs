//! Inputs for the hardening audits that fail in known ways.

/// php.ini with dangerous functions enabled, remote includes allowed and
/// week-long sessions.
pub const NONCONFORMING_PHP_INI: &str = "\
[PHP]
engine = On
expose_php = On
allow_url_fopen = On
allow_url_include = On
display_errors = On
disable_functions = pcntl_exec
memory_limit = 256M
upload_max_filesize = 64M

[Session]
session.gc_maxlifetime = 604800
session.cookie_httponly = 1
";

/// A php.ini that passes every runtime check with default policy.
pub const COMPLIANT_PHP_INI: &str = "\
[PHP]
expose_php = Off
allow_url_fopen = Off
allow_url_include = Off
display_errors = Off
disable_functions = exec,passthru,shell_exec,system,proc_open,popen,show_source,eval,assert,create_function,pcntl_exec,curl_exec,curl_multi_exec,parse_ini_file
memory_limit = 128M

[Session]
session.gc_maxlifetime = 1440
";

/// Credential records: a default admin account with a dictionary password
/// and one healthy account.
pub const WEAK_CREDENTIALS: &str = r#"{"account":"admin","realm":"cms","password":"Password123!"}
{"account":"deploy","realm":"ftp","password":"deploy2024"}
{"account":"m.ortega","realm":"cms","password":"tangerine-Ladder-41-quiet"}
"#;
