//! Version-to-version schema diff, and shadow/unexercised endpoints against a
//! reference OpenAPI document.
//!
//! cargo run -p apimap --example schema_diff

use apimap::openapi::{diff_specs, shadow_report};
use apimap::reducer::{reduce_tree, update_schema};
use apimap::tree::ApiTree;
use apimap::{parse_request, RawRequest};

fn tree(reqs: &[RawRequest]) -> apimap::Result<ApiTree> {
    let mut t = ApiTree::default();
    for r in reqs {
        t.insert_request(&parse_request(r)?);
    }
    Ok(t)
}

fn main() -> apimap::Result<()> {
    let v1_traffic: Vec<RawRequest> = (1..=6)
        .flat_map(|i| {
            [
                RawRequest::new("GET", format!("/shop/items/{i}")),
                RawRequest::new("GET", format!("/shop/items/{i}/reviews")),
            ]
        })
        .collect();
    let v1 = reduce_tree(&tree(&v1_traffic)?, 3);

    let delta: Vec<RawRequest> = (1..=4)
        .flat_map(|i| {
            [
                RawRequest::new("DELETE", format!("/shop/items/{i}")),
                RawRequest::new("GET", format!("/shop/items/{i}/reviews?sort=new")),
                RawRequest::new("GET", format!("/internal/debug/{i}")),
            ]
        })
        .collect();
    let v2 = update_schema(&v1, &tree(&delta)?, 3);
    print!("{}", diff_specs(&v1, &v2).to_text());

    let reference = serde_json::json!({
        "openapi": "3.0.3",
        "paths": {
            "/shop/items/{id}": {"get": {}, "delete": {}},
            "/shop/items/{id}/reviews": {"get": {}},
            "/shop/cart": {"get": {}}
        }
    });
    let r = shadow_report(&v2, &reference);
    println!("\nshadow (observed, not documented): {:?}", r.shadow);
    println!("unexercised (documented, never seen): {:?}", r.unexercised);
    Ok(())
}
