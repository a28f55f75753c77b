const { Builder, By } = require("selenium-webdriver");
const { expect } = require("chai");

describe("age form", function () {
    it("shows the typed age in the label", async function () {
        const driver = await new Builder().forBrowser("chrome").build();
        await driver.get("http://localhost:3000/form");
        await driver.findElement(By.id("age-input"))
            .sendKeys("23");
        /* wefix:begin wait 2 */ await driver.wait(async () => {
          try {
            const el0 = await driver.findElement(By.xpath("//*[@id=\"age\"]"));
            if ((await el0.getText()) !== "23") return false;
            return true;
          } catch (e) { return false; }
        }, 4000, undefined, 100); /* wefix:end */
        expect(await driver.findElement(By.id("age")).getText()).to.equal("23");
        await driver.quit();
    });
});
