describe("crlf file", function () {
  it("still works", async function () {
    await driver.get("https://example.test/crlf");
    await driver.findElement(By.id("ok")).click();
  });
});
